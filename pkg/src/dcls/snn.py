"""Feedforward spiking network with learnable synaptic delays.

Each synapse (i <- j) is a 1D temporal kernel of length ``T_d`` holding one
Gaussian bump of mass ``w`` centred at tap ``T_d - 1 - d``.  Inputs are
left-padded by ``T_d - 1`` zeros, so a spike at ``t`` reaches the target at
``t + d``.  At evaluation time the bump is replaced by a single tap at the
rounded delay.

Spike trains are laid out ``(batch, channels, time)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conv import ConvSpec, conv_backward_input, conv_backward_weight, conv_forward, im2col
from .interpolation import gaussian, gaussian_dx
from .nn import Module, Param, softmax

EPS = 1e-7


@dataclass
class LifConfig:
    """Discrete LIF: u[t] = (1 - 1/tau) u[t-1] + I[t], spike when u >= threshold.

    ``smooth`` swaps the Heaviside for the arctan sigmoid whose derivative is
    the surrogate; that makes the forward pass differentiable for gradient
    checks.  ``detach_reset`` keeps the reset out of the gradient path.
    """

    tau: float = 1.05
    threshold: float = 1.0
    reset: float = 0.0
    surrogate_alpha: float = 2.0
    detach_reset: bool = True
    smooth: bool = False

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError(f"tau must be > 1 (got {self.tau})")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive (use inf for a readout)")

    @property
    def leak(self) -> float:
        return 1.0 - 1.0 / self.tau


def surrogate_heaviside_backward(x, alpha: float = 2.0):
    """Arctan surrogate: alpha / (2 (1 + (pi alpha x / 2)^2))."""
    return alpha / (2.0 * (1.0 + (0.5 * math.pi * alpha * np.asarray(x)) ** 2))


def surrogate_sigmoid(x, alpha: float = 2.0):
    return np.arctan(0.5 * math.pi * alpha * np.asarray(x)) / math.pi + 0.5


def _spike(cfg: LifConfig, v):
    if math.isinf(cfg.threshold):
        return np.zeros_like(v)
    if cfg.smooth:
        return surrogate_sigmoid(v - cfg.threshold, cfg.surrogate_alpha).astype(v.dtype)
    return (v >= cfg.threshold).astype(v.dtype)


def lif_forward(cfg: LifConfig, current):
    """Run the neuron over the last axis; returns (spikes, pre-reset potentials)."""
    current = np.asarray(current)
    beta = cfg.leak
    S = np.empty_like(current)
    U = np.empty_like(current)
    u = np.zeros(current.shape[:-1], dtype=current.dtype)
    for t in range(current.shape[-1]):
        u = beta * u + current[..., t]
        s = _spike(cfg, u)
        U[..., t] = u
        S[..., t] = s
        u = u * (1 - s) + cfg.reset * s
    return S, U


def lif_backward(cfg: LifConfig, U, S, grad_spikes=None, grad_potential=None):
    """Backpropagate through time; returns dL/dI."""
    beta = cfg.leak
    finite = not math.isinf(cfg.threshold)
    gI = np.empty_like(U)
    carry = np.zeros(U.shape[:-1], dtype=U.dtype)
    for t in range(U.shape[-1] - 1, -1, -1):
        u, s = U[..., t], S[..., t]
        ds = surrogate_heaviside_backward(u - cfg.threshold, cfg.surrogate_alpha) if finite else 0.0
        # carry = dL/d(post-reset u[t]); post-reset = u (1 - s) + reset s
        g = carry * (1 - s)
        gs = 0.0
        if grad_spikes is not None:
            gs = grad_spikes[..., t]
        if finite and not cfg.detach_reset:
            gs = gs + carry * (cfg.reset - u)
        g = g + gs * ds
        if grad_potential is not None:
            g = g + grad_potential[..., t]
        gI[..., t] = g
        carry = beta * g
    return gI


class LIF(Module):
    def __init__(self, cfg: LifConfig):
        self.cfg = cfg

    def forward(self, x):
        self._S, self._U = lif_forward(self.cfg, x)
        return self._S if not math.isinf(self.cfg.threshold) else self._U

    def backward(self, g):
        if math.isinf(self.cfg.threshold):
            return lif_backward(self.cfg, self._U, self._S, grad_potential=g)
        return lif_backward(self.cfg, self._U, self._S, grad_spikes=g)


def round_half_away(x):
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def delay_kernel(w, d, sigma: float, T_d: int, eps: float = EPS):
    """(out, in, T_d) kernels: normalised Gaussians of mass ~w at tap T_d - 1 - d."""
    n = np.arange(T_d, dtype=np.float64)
    x = n - (T_d - 1 - np.asarray(d, dtype=np.float64))[..., None]
    e = gaussian(x, sigma)
    c = eps + e.sum(-1, keepdims=True)
    return np.asarray(w, dtype=np.float64)[..., None] * e / c


def delay_kernel_backward(grad_k, w, d, sigma: float, T_d: int, eps: float = EPS):
    """Gradients of <grad_k, delay_kernel> w.r.t. (w, d), normaliser included."""
    n = np.arange(T_d, dtype=np.float64)
    x = n - (T_d - 1 - np.asarray(d, dtype=np.float64))[..., None]
    e = gaussian(x, sigma)
    de = gaussian_dx(x, sigma)  # dx/dd = +1
    c = eps + e.sum(-1)
    q = (grad_k * e).sum(-1)
    gw = q / c
    gd = np.asarray(w) * ((grad_k * de).sum(-1) * c - q * de.sum(-1)) / c**2
    return gw, gd


def discrete_kernel(w, d, T_d: int):
    """Single tap of value w at T_d - round(d) - 1 (round half away from zero)."""
    w = np.asarray(w)
    k = np.zeros(w.shape + (T_d,), dtype=np.float64)
    idx = (T_d - 1 - round_half_away(d)).astype(int)
    if np.any(idx < 0) or np.any(idx >= T_d):
        raise ValueError("delay out of [0, T_d - 1]")
    np.put_along_axis(k, idx[..., None], w[..., None], axis=-1)
    return k


class DelayLayer(Module):
    """Fully connected layer whose synapses carry a weight and a learnable delay."""

    def __init__(self, n_in, n_out, T_d, rng=None, dtype=np.float32, mask=None, weight_scale=1.0):
        rng = rng or np.random.default_rng(0)
        self.T_d = int(T_d)
        if self.T_d < 1:
            raise ValueError("T_d must be >= 1")
        fan_in = n_in if mask is None else max(1.0, float(np.asarray(mask).sum(1).mean()))
        bound = weight_scale / math.sqrt(fan_in)
        self.weight = Param(rng.uniform(-bound, bound, (n_out, n_in)).astype(dtype), "weight", "delay.weight")
        self.delay = Param(rng.uniform(0, self.T_d - 1, (n_out, n_in)).astype(dtype), "position", "delay.delay")
        self.mask = None if mask is None else np.asarray(mask, dtype=dtype)
        self.sigma = self.T_d / 2
        self.discrete = False
        self.spec = ConvSpec((self.T_d,))

    def params(self):
        return [self.weight, self.delay]

    def effective_weight(self):
        w = self.weight.data
        return w if self.mask is None else w * self.mask

    def kernel(self) -> np.ndarray:
        w, d = self.effective_weight(), self.delay.data
        if self.discrete:
            return discrete_kernel(w, d, self.T_d)
        return delay_kernel(w, d, self.sigma, self.T_d)

    def clamp(self):
        np.clip(self.delay.data, 0, self.T_d - 1, out=self.delay.data)

    def _pad(self, x):
        return np.pad(x, ((0, 0), (0, 0), (self.T_d - 1, 0)))

    def forward(self, x):
        self._k = self.kernel().astype(x.dtype)
        self._xp = self._pad(x)
        self._cols = im2col(self._xp, self.spec)
        return conv_forward(self._xp, self._k, spec=self.spec, cols=self._cols)

    def backward(self, g):
        gk = conv_backward_weight(self._xp, g, self.spec, cols=self._cols)
        gw, gd = delay_kernel_backward(gk, self.effective_weight(), self.delay.data, self.sigma, self.T_d)
        if self.mask is not None:
            gw, gd = gw * self.mask, gd * self.mask
        self.weight.grad += gw.astype(self.weight.grad.dtype)
        self.delay.grad += gd.astype(self.delay.grad.dtype)
        gx = conv_backward_input(g, self._k, self.spec, self._xp.shape)
        return gx[..., self.T_d - 1 :]


class BatchNorm(Module):
    """Per-channel standardisation over (batch, time) with affine scale/shift."""

    def __init__(self, n, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.gamma = Param(np.ones(n, dtype=dtype), "bn", "bn.gamma")
        self.beta = Param(np.zeros(n, dtype=dtype), "bn", "bn.beta")
        self.running_mean = np.zeros(n, dtype=dtype)
        self.running_var = np.ones(n, dtype=dtype)
        self.momentum, self.eps = momentum, eps

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        if self.training:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            n = x.shape[0] * x.shape[2]
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var * n / max(n - 1, 1)
        else:
            mean, var = self.running_mean, self.running_var
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mean[None, :, None]) * self._inv[None, :, None]
        return self.gamma.data[None, :, None] * self._xhat + self.beta.data[None, :, None]

    def backward(self, g):
        self.gamma.grad += (g * self._xhat).sum(axis=(0, 2))
        self.beta.grad += g.sum(axis=(0, 2))
        gx_hat = g * self.gamma.data[None, :, None]
        if not self.training:
            return gx_hat * self._inv[None, :, None]
        m = gx_hat.mean(axis=(0, 2), keepdims=True)
        mx = (gx_hat * self._xhat).mean(axis=(0, 2), keepdims=True)
        return (gx_hat - m - self._xhat * mx) * self._inv[None, :, None]


class Dropout(Module):
    """Channel dropout with one mask per (sample, neuron), shared across time."""

    def __init__(self, p: float, rng=None):
        self.p = p
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x):
        if not self.training or self.p <= 0:
            self._m = None
            return x
        keep = (self.rng.random(x.shape[:2] + (1,)) >= self.p).astype(x.dtype) / (1 - self.p)
        self._m = keep
        return x * keep

    def backward(self, g):
        return g if self._m is None else g * self._m


def readout_loss(potentials, labels):
    """Cross-entropy on the time-summed per-step softmax of readout potentials.

    potentials: (N, classes, T).  Returns (loss, dL/dpotentials, summed output).
    """
    u = np.asarray(potentials, dtype=np.float64)
    n = u.shape[0]
    out = softmax(u, axis=1)
    y_hat = out.sum(-1)
    p = softmax(y_hat, axis=1)
    loss = float(-np.log(p[np.arange(n), labels] + 1e-300).mean())
    g_y = p.copy()
    g_y[np.arange(n), labels] -= 1
    g_y /= n
    g_out = g_y[..., None]
    g_u = out * (g_out - (out * g_out).sum(axis=1, keepdims=True))
    return loss, g_u.astype(np.asarray(potentials).dtype), y_hat


def readout_and_loss(potentials, label) -> float:
    """Loss for a single sample (classes, T) or a batch (N, classes, T)."""
    u = np.asarray(potentials)
    labels = np.atleast_1d(label)
    if u.ndim == 2:
        u = u[None]
    return readout_loss(u, labels)[0]


def sparse_mask(n_out, n_in, connections: int, rng) -> np.ndarray:
    """Binary mask keeping exactly ``connections`` random inputs per output neuron."""
    connections = min(int(connections), n_in)
    mask = np.zeros((n_out, n_in), dtype=np.float32)
    for i in range(n_out):
        mask[i, rng.choice(n_in, connections, replace=False)] = 1
    return mask


@dataclass
class SnnConfig:
    n_in: int = 20
    n_hidden: int = 64
    n_layers: int = 2
    n_classes: int = 10
    T_d: int = 25
    tau: float = 1.05
    threshold: float = 1.0
    surrogate_alpha: float = 2.0
    batchnorm: bool = True
    dropout: float = 0.0
    connections: int = 0  # per neuron; 0 means fully connected
    sparse_readout: bool = False
    weight_scale: float = 1.0


class SNN(Module):
    """[delay layer -> BN -> LIF -> dropout] x n_layers -> delay layer -> readout LIF."""

    def __init__(self, cfg: SnnConfig, rng=None, dtype=np.float32, smooth: bool = False):
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        self.layers: list[Module] = []
        self.delay_layers: list[DelayLayer] = []
        n = cfg.n_in
        lif = LifConfig(cfg.tau, cfg.threshold, 0.0, cfg.surrogate_alpha,
                        detach_reset=not smooth, smooth=smooth)
        for _ in range(cfg.n_layers):
            mask = sparse_mask(cfg.n_hidden, n, cfg.connections, rng) if cfg.connections else None
            dl = DelayLayer(n, cfg.n_hidden, cfg.T_d, rng, dtype, mask, cfg.weight_scale)
            self.delay_layers.append(dl)
            self.layers.append(dl)
            if cfg.batchnorm:
                self.layers.append(BatchNorm(cfg.n_hidden, dtype=dtype))
            self.layers.append(LIF(lif))
            if cfg.dropout > 0:
                self.layers.append(Dropout(cfg.dropout, rng))
            n = cfg.n_hidden
        mask = None
        if cfg.connections and cfg.sparse_readout:
            mask = sparse_mask(cfg.n_classes, n, cfg.connections, rng)
        dl = DelayLayer(n, cfg.n_classes, cfg.T_d, rng, dtype, mask, cfg.weight_scale)
        self.delay_layers.append(dl)
        self.layers.append(dl)
        self.layers.append(LIF(LifConfig(cfg.tau, math.inf, 0.0, cfg.surrogate_alpha)))

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def train(self, mode=True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self

    def set_sigma(self, sigma: float):
        for dl in self.delay_layers:
            dl.sigma = sigma

    def set_discrete(self, flag: bool):
        for dl in self.delay_layers:
            dl.discrete = flag

    def clamp_delays(self):
        for dl in self.delay_layers:
            dl.clamp()


# ---------------------------------------------------------------------------
# synthetic temporal datasets


def make_synthetic_dataset(kind: str = "delayed-pattern", n_samples: int = 1000, seed: int = 0,
                           n_channels: int = 20, T: int = 50, n_classes: int = 10, max_offset: int = 20,
                           jitter: int = 0, noise_rate: float = 0.0, offset: int = 8):
    """Spike trains (N, channels, T) float32 and int labels.

    ``coincidence``: two channels, one spike each; class 1 has channel 1 firing
    ``offset`` steps after channel 0, class 0 has them synchronous.

    ``delayed-pattern``: every class owns a template giving each channel one
    spike at a fixed offset in [0, max_offset); samples place the template at a
    random onset.  Every channel fires exactly once in every sample, so spike
    counts carry no class information; optional background noise spikes are
    drawn independently of the class.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % (2 if kind == "coincidence" else n_classes)
    rng.shuffle(labels)
    if kind == "coincidence":
        x = np.zeros((n_samples, 2, T), dtype=np.float32)
        onset = rng.integers(0, T - offset, n_samples)
        x[np.arange(n_samples), 0, onset] = 1
        x[np.arange(n_samples), 1, onset + offset * labels] = 1
        return x, labels
    if kind != "delayed-pattern":
        raise ValueError(f"unknown dataset kind {kind!r}")
    trng = np.random.default_rng(10_000 + seed)
    templates = trng.integers(0, max_offset, (n_classes, n_channels))
    x = np.zeros((n_samples, n_channels, T), dtype=np.float32)
    span = max_offset + 2 * jitter
    if span > T:
        raise ValueError("max_offset + 2 jitter exceeds T")
    onset = rng.integers(jitter, T - max_offset - jitter + 1, n_samples)
    times = templates[labels] + onset[:, None]
    if jitter:
        times = times + rng.integers(-jitter, jitter + 1, times.shape)
    x[np.arange(n_samples)[:, None], np.arange(n_channels)[None, :], times] = 1
    if noise_rate > 0:
        x = np.maximum(x, (rng.random(x.shape) < noise_rate).astype(np.float32))
    return x, labels
