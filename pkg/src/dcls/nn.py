"""Layers with hand-written backward passes.

Every layer caches what it needs in ``forward`` and accumulates parameter
gradients into ``Param.grad`` in ``backward``, returning the input gradient.
Sharing a :class:`Param` between layers therefore sums their gradients.
"""

from __future__ import annotations

import numpy as np

from .conv import ConvSpec, conv_backward_bias, conv_backward_input, conv_backward_weight, conv_forward, im2col
from .interpolation import InterpKind
from .kernel import DclsParams, clamp_positions


class Param:
    def __init__(self, data, kind: str = "weight", name: str = ""):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)
        self.kind = kind
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0

    def __repr__(self):
        return f"Param({self.name or self.kind}, shape={self.data.shape})"


class Module:
    training = True

    def params(self) -> list[Param]:
        return []

    def train(self, mode: bool = True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self):
        seen, out = set(), []
        for layer in self.layers:
            for p in layer.params():
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        return out

    def train(self, mode=True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self


def _he(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


class Conv(Module):
    """Plain convolution layer, any spatial dimension."""

    def __init__(self, c_in, c_out, kernel_size, stride=1, padding=0, dilation=1, groups=1,
                 bias=True, rng=None, dtype=np.float32, weight=None):
        rng = rng or np.random.default_rng(0)
        k = (kernel_size,) if isinstance(kernel_size, int) else tuple(kernel_size)
        self.spec = ConvSpec(k, stride, dilation, padding, groups)
        fan_in = c_in // groups * int(np.prod(k))
        w = weight if weight is not None else _he(rng, (c_out, c_in // groups) + k, fan_in, dtype)
        self.weight = Param(np.asarray(w, dtype=dtype), "weight", "conv.weight")
        self.bias = Param(_he(rng, (c_out,), fan_in, dtype), "bias", "conv.bias") if bias else None

    def params(self):
        return [self.weight] + ([self.bias] if self.bias else [])

    def forward(self, x):
        self._x = x
        self._cols = im2col(x, self.spec)
        return conv_forward(x, self.weight.data, self.bias.data if self.bias else None, self.spec, cols=self._cols)

    def backward(self, g):
        self.weight.grad += conv_backward_weight(self._x, g, self.spec, cols=self._cols)
        if self.bias:
            self.bias.grad += conv_backward_bias(g)
        return conv_backward_input(g, self.weight.data, self.spec, self._x.shape)


class DclsConv(Module):
    """Convolution whose kernel is built from learnable positions ('same' padding).

    ``positions`` and ``sigmas`` may be passed in to share them between layers.
    """

    def __init__(self, c_in, c_out, kernel_count, dilated_size, kind="gauss", groups=1, bias=True,
                 rng=None, dtype=np.float32, positions: Param | None = None, sigmas: Param | None = None,
                 position_init: str = "image"):
        from .training import init_positions

        rng = rng or np.random.default_rng(0)
        self.kind = InterpKind.parse(kind)
        self.size = (dilated_size,) * 2 if isinstance(dilated_size, int) else tuple(dilated_size)
        d = len(self.size)
        self.spec = ConvSpec(self.size, padding=tuple(s // 2 for s in self.size), groups=groups)
        shape = (c_out, c_in // groups, kernel_count)
        fan_in = c_in // groups * kernel_count
        self.weight = Param(_he(rng, shape, fan_in, dtype), "weight", "dcls.weight")
        self.bias = Param(_he(rng, (c_out,), fan_in, dtype), "bias", "dcls.bias") if bias else None
        if positions is None or (sigmas is None and self.kind is not InterpKind.BILINEAR):
            p0, s0 = init_positions(position_init, (d,) + shape, kind=self.kind, rng=rng, size=self.size)
        if positions is None:
            positions = Param(clamp_positions(p0, self.size).astype(dtype), "position", "dcls.positions")
        if sigmas is None and self.kind is not InterpKind.BILINEAR:
            sigmas = Param(s0.astype(dtype), "sigma", "dcls.sigmas")
        self.positions, self.sigmas = positions, sigmas

    def params(self):
        out = [self.weight, self.positions]
        if self.sigmas is not None:
            out.append(self.sigmas)
        return out + ([self.bias] if self.bias else [])

    def dcls_params(self) -> DclsParams:
        return DclsParams(self.weight.data, self.positions.data, self.size,
                          None if self.sigmas is None else self.sigmas.data, self.kind)

    def kernel(self):
        return self.dcls_params().construct().astype(self.weight.data.dtype)

    def forward(self, x):
        self._x = x
        self._k = self.kernel()
        self._cols = im2col(x, self.spec)
        return conv_forward(x, self._k, self.bias.data if self.bias else None, self.spec, cols=self._cols)

    def backward(self, g):
        gk = conv_backward_weight(self._x, g, self.spec, cols=self._cols)
        gw, gp, gs = self.dcls_params().backward(gk)
        self.weight.grad += gw
        self.positions.grad += gp
        if gs is not None:
            self.sigmas.grad += gs
        if self.bias:
            self.bias.grad += conv_backward_bias(g)
        return conv_backward_input(g, self._k, self.spec, self._x.shape)


class ReLU(Module):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


class GlobalAvgPool(Module):
    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=tuple(range(2, x.ndim)))

    def backward(self, g):
        n = int(np.prod(self._shape[2:]))
        return np.broadcast_to(g.reshape(g.shape + (1,) * (len(self._shape) - 2)) / n, self._shape).copy()


class GlobalMaxPool(Module):
    """Max over all spatial positions; the gradient goes to the first maximum."""

    def forward(self, x):
        self._shape = x.shape
        flat = x.reshape(x.shape[0], x.shape[1], -1)
        self._idx = flat.argmax(-1)
        return np.take_along_axis(flat, self._idx[..., None], -1)[..., 0]

    def backward(self, g):
        out = np.zeros((g.shape[0], g.shape[1], int(np.prod(self._shape[2:]))), dtype=g.dtype)
        np.put_along_axis(out, self._idx[..., None], g[..., None], -1)
        return out.reshape(self._shape)


class Linear(Module):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.weight = Param(_he(rng, (n_out, n_in), n_in, dtype), "weight", "linear.weight")
        self.bias = Param(np.zeros(n_out, dtype=dtype), "bias", "linear.bias")

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, g):
        self.weight.grad += g.T @ self._x
        self.bias.grad += g.sum(0)
        return g @ self.weight.data


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    p = softmax(logits.astype(np.float64), axis=1)
    loss = -np.log(p[np.arange(n), labels] + 1e-300).mean()
    g = p.copy()
    g[np.arange(n), labels] -= 1
    return float(loss), (g / n).astype(logits.dtype)
