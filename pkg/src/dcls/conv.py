"""Reference convolution engine built on im2col / col2im.

Tensors are laid out ``(B, C, *spatial)`` and weights ``(C_out, C_in // G, *k)``.
The operation is a cross-correlation with zero padding.  ``conv_direct`` is an
independent nested-loop implementation used as an oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConvSpec:
    kernel_size: tuple[int, ...]
    stride: tuple[int, ...] | None = None
    dilation: tuple[int, ...] | None = None
    padding: tuple[int, ...] | None = None
    groups: int = 1

    def __post_init__(self):
        k = _tup(self.kernel_size, None)
        d = len(k)
        object.__setattr__(self, "kernel_size", k)
        object.__setattr__(self, "stride", _tup(self.stride if self.stride is not None else 1, d))
        object.__setattr__(self, "dilation", _tup(self.dilation if self.dilation is not None else 1, d))
        object.__setattr__(self, "padding", _tup(self.padding if self.padding is not None else 0, d))
        if min(k) < 1 or min(self.stride) < 1 or min(self.dilation) < 1:
            raise ValueError("kernel size, stride and dilation must be >= 1")
        if min(self.padding) < 0:
            raise ValueError("padding must be >= 0")
        if self.groups < 1:
            raise ValueError("groups must be >= 1")

    @property
    def ndim(self) -> int:
        return len(self.kernel_size)


def _tup(v, d):
    if isinstance(v, (int, np.integer)):
        return (int(v),) * (d or 1)
    v = tuple(int(x) for x in v)
    if d is not None and len(v) != d:
        raise ValueError(f"expected {d} values, got {v}")
    return v


def output_shape(in_shape, spec: ConvSpec) -> tuple[int, ...]:
    """Spatial output size, floor((H + 2 pad - df (k - 1) - 1) / s + 1) per axis."""
    in_shape = _tup(in_shape, spec.ndim)
    out = []
    for h, k, s, df, pad in zip(in_shape, spec.kernel_size, spec.stride, spec.dilation, spec.padding):
        n = (h + 2 * pad - df * (k - 1) - 1) // s + 1
        if n < 1:
            raise ValueError("kernel larger than padded input")
        out.append(n)
    return tuple(out)


def _check(x, w, spec):
    if x.ndim != spec.ndim + 2:
        raise ValueError(f"input must have {spec.ndim + 2} dims, got {x.shape}")
    c_in = x.shape[1]
    if c_in % spec.groups:
        raise ValueError(f"groups={spec.groups} does not divide C_in={c_in}")
    if w is not None:
        if w.shape[2:] != spec.kernel_size:
            raise ValueError(f"weight spatial shape {w.shape[2:]} != {spec.kernel_size}")
        if w.shape[0] % spec.groups:
            raise ValueError(f"groups={spec.groups} does not divide C_out={w.shape[0]}")
        if w.shape[1] * spec.groups != c_in:
            raise ValueError(f"weight expects {w.shape[1] * spec.groups} input channels, got {c_in}")


def _pad(x, spec):
    if not any(spec.padding):
        return x
    return np.pad(x, [(0, 0), (0, 0)] + [(p, p) for p in spec.padding])


def _window(k_idx, out, spec):
    return tuple(
        slice(k * df, k * df + s * (o - 1) + 1, s)
        for k, o, s, df in zip(k_idx, out, spec.stride, spec.dilation)
    )


def im2col(x, spec: ConvSpec) -> np.ndarray:
    """Lower ``x`` to a (C * prod(k), B * prod(H_out)) matrix.

    Rows run channel-major then kernel cell row-major; columns run batch-major
    then output location row-major.
    """
    x = np.asarray(x)
    _check(x, None, spec)
    b, c = x.shape[:2]
    out = output_shape(x.shape[2:], spec)
    xp = _pad(x, spec)
    cols = np.empty((c,) + spec.kernel_size + (b,) + out, dtype=x.dtype)
    for k_idx in np.ndindex(*spec.kernel_size):
        patch = xp[(slice(None), slice(None)) + _window(k_idx, out, spec)]
        cols[(slice(None),) + k_idx] = patch.swapaxes(0, 1)
    return cols.reshape(c * int(np.prod(spec.kernel_size)), b * int(np.prod(out)))


def col2im(cols, in_shape, spec: ConvSpec) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter columns back, summing where patches overlap."""
    b, c = in_shape[:2]
    spatial = tuple(in_shape[2:])
    out = output_shape(spatial, spec)
    cols = np.asarray(cols).reshape((c,) + spec.kernel_size + (b,) + out)
    padded = tuple(h + 2 * p for h, p in zip(spatial, spec.padding))
    xp = np.zeros((b, c) + padded, dtype=cols.dtype)
    for k_idx in np.ndindex(*spec.kernel_size):
        xp[(slice(None), slice(None)) + _window(k_idx, out, spec)] += cols[(slice(None),) + k_idx].swapaxes(0, 1)
    crop = tuple(slice(p, p + h) for p, h in zip(spec.padding, spatial))
    return xp[(slice(None), slice(None)) + crop]


def conv_forward(x, weight, bias=None, spec: ConvSpec | None = None, cols=None) -> np.ndarray:
    x, weight = np.asarray(x), np.asarray(weight)
    spec = spec or ConvSpec(weight.shape[2:])
    _check(x, weight, spec)
    b = x.shape[0]
    c_out, g = weight.shape[0], spec.groups
    out = output_shape(x.shape[2:], spec)
    if cols is None:
        cols = im2col(x, spec)
    cols = cols.reshape(g, -1, cols.shape[-1])
    wg = weight.reshape(g, c_out // g, -1)
    y = np.matmul(wg, cols).reshape((c_out, b) + out)
    y = np.moveaxis(y, 0, 1)
    if bias is not None:
        y = y + np.asarray(bias).reshape((1, c_out) + (1,) * len(out))
    return np.ascontiguousarray(y)


def _grad_groups(grad_out, g):
    c_out = grad_out.shape[1]
    go = np.moveaxis(grad_out, 1, 0).reshape(c_out, -1)
    return go.reshape(g, c_out // g, -1)


def conv_backward_weight(x, grad_out, spec: ConvSpec, cols=None) -> np.ndarray:
    """dL/dW = vec'(G_out) x im2col^T, per group."""
    x, grad_out = np.asarray(x), np.asarray(grad_out)
    _check(x, None, spec)
    g = spec.groups
    if grad_out.shape[2:] != output_shape(x.shape[2:], spec) or grad_out.shape[0] != x.shape[0]:
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with input {x.shape}")
    if cols is None:
        cols = im2col(x, spec)
    cols = cols.reshape(g, -1, cols.shape[-1])
    gw = np.matmul(_grad_groups(grad_out, g), cols.swapaxes(1, 2))
    c_out = grad_out.shape[1]
    return gw.reshape((c_out, x.shape[1] // g) + spec.kernel_size)


def conv_backward_input(grad_out, weight, spec: ConvSpec, input_shape) -> np.ndarray:
    grad_out, weight = np.asarray(grad_out), np.asarray(weight)
    input_shape = tuple(input_shape)
    g = spec.groups
    if grad_out.shape[2:] != output_shape(input_shape[2:], spec) or grad_out.shape[1] != weight.shape[0]:
        raise ValueError(f"grad_out shape {grad_out.shape} inconsistent with weight/input")
    wg = weight.reshape(g, weight.shape[0] // g, -1)
    dcols = np.matmul(wg.swapaxes(1, 2), _grad_groups(grad_out, g))
    return col2im(dcols.reshape(-1, dcols.shape[-1]), input_shape, spec)


def conv_backward_bias(grad_out) -> np.ndarray:
    grad_out = np.asarray(grad_out)
    return grad_out.sum(axis=(0,) + tuple(range(2, grad_out.ndim)))


def conv_direct(x, weight, bias=None, spec: ConvSpec | None = None) -> np.ndarray:
    """Cross-correlation straight from the definition; slow, any dimension."""
    x, weight = np.asarray(x), np.asarray(weight)
    spec = spec or ConvSpec(weight.shape[2:])
    _check(x, weight, spec)
    b, c_in = x.shape[:2]
    c_out = weight.shape[0]
    cpg_in, cpg_out = c_in // spec.groups, c_out // spec.groups
    out = output_shape(x.shape[2:], spec)
    y = np.zeros((b, c_out) + out, dtype=np.result_type(x, weight))
    spatial = x.shape[2:]
    for n, co in itertools.product(range(b), range(c_out)):
        grp = co // cpg_out
        for o_idx in itertools.product(*(range(o) for o in out)):
            acc = 0.0 if bias is None else float(bias[co])
            for ci in range(cpg_in):
                for k_idx in itertools.product(*(range(k) for k in spec.kernel_size)):
                    pos = [
                        o * s + k * df - p
                        for o, k, s, df, p in zip(o_idx, k_idx, spec.stride, spec.dilation, spec.padding)
                    ]
                    if all(0 <= q < h for q, h in zip(pos, spatial)):
                        acc += weight[(co, ci) + k_idx] * x[(n, grp * cpg_in + ci) + tuple(pos)]
            y[(n, co) + o_idx] = acc
    return y


def inflate_kernel(weight, dilation) -> np.ndarray:
    """Insert (df - 1) zeros between taps so a dilated conv becomes a plain one."""
    weight = np.asarray(weight)
    d = weight.ndim - 2
    dilation = _tup(dilation, d)
    k = weight.shape[2:]
    big = tuple(df * (kk - 1) + 1 for kk, df in zip(k, dilation))
    out = np.zeros(weight.shape[:2] + big, dtype=weight.dtype)
    out[(slice(None), slice(None)) + tuple(slice(None, None, df) for df in dilation)] = weight
    return out


def dilated_equivalence_check(weight, dilation, x=None, rng=None, atol: float = 1e-12) -> bool:
    """Conv with dilation df equals a df=1 conv with the zero-inflated kernel."""
    weight = np.asarray(weight, dtype=np.float64)
    d = weight.ndim - 2
    dilation = _tup(dilation, d)
    if x is None:
        rng = rng or np.random.default_rng(0)
        k = weight.shape[2:]
        size = [df * (kk - 1) + 1 + 5 for kk, df in zip(k, dilation)]
        x = rng.standard_normal([2, weight.shape[1]] + size)
    a = conv_forward(x, weight, spec=ConvSpec(weight.shape[2:], dilation=dilation))
    wi = inflate_kernel(weight, dilation)
    b = conv_forward(x, wi, spec=ConvSpec(wi.shape[2:]))
    return a.shape == b.shape and bool(np.max(np.abs(a - b), initial=0.0) < atol)
