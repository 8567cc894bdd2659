"""Finite-difference gradient checks for every analytic backward in the package.

Each suite draws random f64 instances, computes the analytic gradient of a
scalar probe ``<G, f(theta)>`` and compares it with central differences
(h = 1e-6).  The error of one instance is ``max|a - n| / max(max|n|, 1e-8)``
over all parameter tensors; a suite passes when the worst instance is below
its threshold.  Instances too close to a non-differentiable point (integer
bilinear positions, triangle kinks) are redrawn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import conv as _conv
from . import kernel as _kernel
from . import snn as _snn
from .interpolation import InterpKind, d_weight_dsigma, d_weight_dx, weight

H = 1e-6
KINK_MARGIN = 1e-3


@dataclass
class GradReport:
    scope: str
    instances: int
    worst: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.worst < self.threshold)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.scope}: {verdict}, {self.instances} instances, "
                f"max rel err {self.worst:.3e} (threshold {self.threshold:.0e})")


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``arr`` (mutated in place, restored)."""
    g = np.zeros_like(arr, dtype=np.float64)
    for i in np.ndindex(arr.shape):
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(pairs) -> float:
    num = max(float(np.max(np.abs(a - n), initial=0.0)) for a, n in pairs)
    den = max(float(np.max(np.abs(n), initial=0.0)) for _, n in pairs)
    return num / max(den, 1e-8)


# ---------------------------------------------------------------------------
# DCLS kernels


def _near_kinks(p, sigmas, size, kind) -> bool:
    shifted = p + (np.asarray(size) // 2).reshape((-1,) + (1,) * (p.ndim - 1))
    if kind is InterpKind.BILINEAR:
        frac = shifted - np.floor(shifted)
        return bool(np.any(np.minimum(frac, 1 - frac) < KINK_MARGIN))
    if kind is InterpKind.TRIANGLE:
        if np.any(np.abs(sigmas) < KINK_MARGIN):
            return True
        for a, s in enumerate(size):
            x = shifted[a][..., None] - np.arange(s)
            scale = 1.0 + np.abs(sigmas[a])[..., None]
            if np.any(np.abs(x) < KINK_MARGIN) or np.any(np.abs(scale - np.abs(x)) < KINK_MARGIN):
                return True
    return False


def random_dcls_instance(rng, ndim: int, kind, c_out=2, c_in=2, m=3, size=None):
    kind = InterpKind.parse(kind)
    size = tuple(size or rng.integers(3, 8, ndim))
    lo, hi = _kernel.position_bounds(size)
    while True:
        w = rng.standard_normal((c_out, c_in, m))
        p = np.stack([rng.uniform(lo[a], hi[a], (c_out, c_in, m)) for a in range(ndim)])
        s = None if kind is InterpKind.BILINEAR else rng.normal(0, 0.6, p.shape)
        if not _near_kinks(p, s, size, kind):
            return _kernel.DclsParams(w, p, size, s, kind)


def check_dcls(params: _kernel.DclsParams, rng, backward=None) -> float:
    G = rng.standard_normal(params.weights.shape[:2] + params.size)
    if backward is None:
        gw, gp, gs = params.backward(G)
    else:
        gw, gp, gs = backward(G, params)

    def probe():
        return float((params.construct() * G).sum())

    pairs = [(gw, numeric_grad(probe, params.weights)), (gp, numeric_grad(probe, params.positions))]
    if params.sigmas is not None:
        pairs.append((gs, numeric_grad(probe, params.sigmas)))
    return rel_error(pairs)


def suite_dcls(ndim: int, instances: int = 200, seed: int = 0, kinds=None, threshold=1e-5,
               backward=None) -> GradReport:
    rng = np.random.default_rng(seed)
    kinds = kinds or [InterpKind.BILINEAR]
    worst = 0.0
    for i in range(instances):
        params = random_dcls_instance(rng, ndim, kinds[i % len(kinds)])
        worst = max(worst, check_dcls(params, rng, backward))
    return GradReport(f"dcls{ndim}d", instances, worst, threshold)


def suite_interp(instances: int = 200, seed: int = 0, threshold=1e-5, backward=None) -> GradReport:
    """Normalised Triangle/Gauss kernels in 1D, 2D and 3D (w, p and sigma)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    kinds = (InterpKind.GAUSS, InterpKind.TRIANGLE)
    for i in range(instances):
        params = random_dcls_instance(rng, 1 + i % 3, kinds[(i // 3) % 2])
        worst = max(worst, check_dcls(params, rng, backward))
    return GradReport("interp", instances, worst, threshold)


def suite_weight_fn(instances: int = 1000, seed: int = 0, threshold=1e-5) -> GradReport:
    """Scalar d_weight_dx / d_weight_dsigma against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < instances:
        kind = (InterpKind.GAUSS, InterpKind.TRIANGLE)[done % 2]
        x, s = rng.uniform(-3, 3), rng.uniform(-2, 2)
        scale = kind.sigma0 + abs(s)
        if kind is InterpKind.TRIANGLE and (min(abs(x), abs(scale - abs(x))) < KINK_MARGIN):
            continue
        if abs(s) < KINK_MARGIN:
            continue
        nx = (weight(kind, x + H, s) - weight(kind, x - H, s)) / (2 * H)
        ns = (weight(kind, x, s + H) - weight(kind, x, s - H)) / (2 * H)
        ax, as_ = d_weight_dx(kind, x, s), d_weight_dsigma(kind, x, s)
        worst = max(worst, rel_error([(np.atleast_1d(ax), np.atleast_1d(nx))]),
                    rel_error([(np.atleast_1d(as_), np.atleast_1d(ns))]))
        done += 1
    return GradReport("interp-scalar", instances, worst, threshold)


# ---------------------------------------------------------------------------
# convolution


def random_conv_case(rng, ndim: int):
    g = int(rng.choice([1, 2]))
    c_in, c_out = g * int(rng.integers(1, 3)), g * int(rng.integers(1, 3))
    k = tuple(int(v) for v in rng.integers(1, 4, ndim))
    s = tuple(int(v) for v in rng.integers(1, 3, ndim))
    df = tuple(int(v) for v in rng.integers(1, 4, ndim))
    pad = tuple(int(v) for v in rng.integers(0, 3, ndim))
    spec = _conv.ConvSpec(k, s, df, pad, g)
    size = [d * (kk - 1) + 1 + int(rng.integers(0, 5)) for kk, d in zip(k, df)]
    x = rng.standard_normal([int(rng.integers(1, 3)), c_in] + size)
    w = rng.standard_normal((c_out, c_in // g) + k)
    return x, w, spec


def suite_conv(instances: int = 200, seed: int = 0, threshold=1e-5) -> GradReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(instances):
        x, w, spec = random_conv_case(rng, 1 + i % 2)
        b = rng.standard_normal(w.shape[0])
        out = _conv.conv_forward(x, w, b, spec)
        G = rng.standard_normal(out.shape)

        def probe():
            return float((_conv.conv_forward(x, w, b, spec) * G).sum())

        pairs = [
            (_conv.conv_backward_weight(x, G, spec), numeric_grad(probe, w)),
            (_conv.conv_backward_input(G, w, spec, x.shape), numeric_grad(probe, x)),
            (_conv.conv_backward_bias(G), numeric_grad(probe, b)),
        ]
        worst = max(worst, rel_error(pairs))
    return GradReport("conv", instances, worst, threshold)


# ---------------------------------------------------------------------------
# spiking network, surrogate-smoothed forward


def suite_snn(instances: int = 200, seed: int = 0, threshold=1e-4) -> GradReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        cfg = _snn.SnnConfig(n_in=3, n_hidden=3, n_layers=2, n_classes=2, T_d=int(rng.integers(2, 6)),
                             tau=float(rng.uniform(1.5, 5.0)), threshold=float(rng.uniform(0.3, 1.0)),
                             batchnorm=False)
        net = _snn.SNN(cfg, rng, np.float64, smooth=True)
        net.set_sigma(float(rng.uniform(0.5, 3.0)))
        for dl in net.delay_layers:
            dl.weight.data *= 3.0
        x = (rng.random((2, cfg.n_in, 10)) < 0.4).astype(np.float64)
        y = rng.integers(0, cfg.n_classes, 2)
        _, g, _ = _snn.readout_loss(net.forward(x), y)
        for p in net.params():
            p.zero_grad()
        net.backward(g)

        def probe():
            return _snn.readout_loss(net.forward(x), y)[0]

        pairs = [(p.grad.copy(), numeric_grad(probe, p.data)) for p in net.params()]
        worst = max(worst, rel_error(pairs))
    return GradReport("snn", instances, worst, threshold)


SUITES = {
    "dcls1d": lambda n, seed: suite_dcls(1, n, seed),
    "dcls2d": lambda n, seed: suite_dcls(2, n, seed),
    "dcls3d": lambda n, seed: suite_dcls(3, n, seed),
    "interp": lambda n, seed: suite_interp(n, seed),
    "conv": lambda n, seed: suite_conv(n, seed),
    "snn": lambda n, seed: suite_snn(n, seed),
}
