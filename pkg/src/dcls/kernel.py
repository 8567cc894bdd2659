"""Dense kernel construction from learnable (weight, position, sigma) triples.

Shapes, with ``d`` spatial axes and ``m`` kernel elements per channel pair::

    weights   (c_out, c_in // groups, m)
    positions (d, c_out, c_in // groups, m)   centered coordinates, cell units
    sigmas    (d, c_out, c_in // groups, m)   raw values, scale = sigma0 + |sigma|
    kernel    (c_out, c_in // groups, *size)

Positions are shifted by ``size // 2`` before use, so ``p = 0`` is the kernel
centre.  Everything is applied channel-wise; overlapping elements add up.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .interpolation import InterpKind, d_weight_dsigma, d_weight_dx, weight

EPS = 1e-7
_AXES = "xyz"


@dataclass
class DclsParams:
    weights: np.ndarray
    positions: np.ndarray
    size: tuple[int, ...]
    sigmas: np.ndarray | None = None
    kind: InterpKind = InterpKind.BILINEAR

    def __post_init__(self):
        self.size = tuple(int(s) for s in self.size)
        self.kind = InterpKind.parse(self.kind)
        _check_shapes(self.weights, self.positions, self.size, self.sigmas)

    @property
    def ndim(self) -> int:
        return len(self.size)

    @property
    def kernel_count(self) -> int:
        return self.weights.shape[-1]

    def construct(self, eps: float = EPS) -> np.ndarray:
        if self.kind is InterpKind.BILINEAR:
            return construct_bilinear(self.weights, self.positions, self.size)
        return construct_interp(self.weights, self.positions, self.sigmas, self.size, self.kind, eps)

    def backward(self, grad_kernel, eps: float = EPS):
        """Return ``(grad_w, grad_p, grad_sigma)``; grad_sigma is None for bilinear."""
        if self.kind is InterpKind.BILINEAR:
            gw, gp = backward_bilinear(grad_kernel, self.weights, self.positions, self.size)
            return gw, gp, None
        return backward_interp(
            grad_kernel, self.weights, self.positions, self.sigmas, self.size, self.kind, eps
        )


def position_bounds(size) -> tuple[np.ndarray, np.ndarray]:
    """Centered (low, high) limits per axis: shifted positions stay in [0, s-1]."""
    s = np.asarray(size, dtype=int)
    lo = -(s // 2)
    return lo.astype(float), (s - 1 + lo).astype(float)


def clamp_positions(positions: np.ndarray, size, out=None) -> np.ndarray:
    lo, hi = position_bounds(size)
    shape = (-1,) + (1,) * (positions.ndim - 1)
    return np.clip(positions, lo.reshape(shape), hi.reshape(shape), out=out)


def _check_shapes(w, p, size, sigmas=None):
    d = len(size)
    if w.ndim != 3:
        raise ValueError(f"weights must be (c_out, c_in/g, m), got {w.shape}")
    if p.shape != (d,) + w.shape:
        raise ValueError(f"positions shape {p.shape} != {(d,) + w.shape}")
    if sigmas is not None and sigmas.shape != p.shape:
        raise ValueError(f"sigmas shape {sigmas.shape} != {p.shape}")
    if d not in (1, 2, 3):
        raise ValueError("only 1D, 2D and 3D kernels are supported")


def _shift(p, size):
    return p + (np.asarray(size) // 2).reshape((-1,) + (1,) * (p.ndim - 1))


# ---------------------------------------------------------------------------
# bilinear (multilinear in 1D/3D)


def _corners(p, size):
    shifted = _shift(p, size)
    hi = (np.asarray(size) - 1).reshape((-1,) + (1,) * (p.ndim - 1))
    if np.any(shifted < 0) or np.any(shifted > hi):
        raise ValueError("position out of the dilated kernel; clamp positions first")
    base = np.floor(shifted)
    frac = shifted - base
    return base.astype(np.int64), frac


def construct_bilinear(w, p, size) -> np.ndarray:
    size = tuple(size)
    _check_shapes(w, p, size)
    base, r = _corners(p, size)
    c_out, c_in, m = w.shape
    K = np.zeros((c_out, c_in) + size, dtype=np.result_type(w, p))
    co, ci, _ = np.meshgrid(np.arange(c_out), np.arange(c_in), np.arange(m), indexing="ij")
    for corner in itertools.product((0, 1), repeat=len(size)):
        idx = [base[a] + c for a, c in enumerate(corner)]
        coef = np.prod([r[a] if c else 1 - r[a] for a, c in enumerate(corner)], axis=0)
        # an element sitting exactly on the upper edge has no mass past it
        ok = np.all([idx[a] < size[a] for a in range(len(size))], axis=0)
        np.add.at(K, (co[ok], ci[ok], *[i[ok] for i in idx]), (w * coef)[ok])
    return K


def backward_bilinear(grad_kernel, w, p, size):
    size = tuple(size)
    _check_shapes(w, p, size)
    if grad_kernel.shape != w.shape[:2] + size:
        raise ValueError(f"grad shape {grad_kernel.shape} != {w.shape[:2] + size}")
    base, r = _corners(p, size)
    d = len(size)
    c_out, c_in, m = w.shape
    co, ci, _ = np.meshgrid(np.arange(c_out), np.arange(c_in), np.arange(m), indexing="ij")
    gw = np.zeros_like(w, dtype=np.result_type(w, grad_kernel))
    gp = np.zeros(p.shape, dtype=gw.dtype)
    for corner in itertools.product((0, 1), repeat=d):
        idx = [base[a] + c for a, c in enumerate(corner)]
        ok = np.all([idx[a] < size[a] for a in range(d)], axis=0)
        g = grad_kernel[(co, ci, *[np.where(ok, i, 0) for i in idx])] * ok
        factors = [r[a] if c else 1 - r[a] for a, c in enumerate(corner)]
        gw += np.prod(factors, axis=0) * g
        for a, c in enumerate(corner):
            others = np.prod([f for b, f in enumerate(factors) if b != a], axis=0) if d > 1 else 1.0
            gp[a] += (1.0 if c else -1.0) * others * g
    gp *= w
    return gw, gp


# ---------------------------------------------------------------------------
# normalised triangle / gaussian


def _profiles(p, sigmas, size, kind):
    """Per-axis 1D profiles h_a (c_out, c_in, m, s_a) and their x/sigma derivatives."""
    shifted = _shift(p, size)
    hs, dxs, dss = [], [], []
    for a, s in enumerate(size):
        x = shifted[a][..., None] - np.arange(s)
        sig = sigmas[a][..., None]
        hs.append(weight(kind, x, sig))
        dxs.append(d_weight_dx(kind, x, sig))
        dss.append(d_weight_dsigma(kind, x, sig))
    return hs, dxs, dss


def _contract(G, hs):
    """<G, outer(h_1, ..., h_d)> for every element -> (c_out, c_in, m)."""
    ax = _AXES[: len(hs)]
    subs = "ci" + ax + "," + ",".join("cim" + a for a in ax) + "->cim"
    return np.einsum(subs, G, *hs, optimize=True)


def construct_interp(w, p, sigmas, size, kind=InterpKind.GAUSS, eps: float = EPS) -> np.ndarray:
    kind = InterpKind.parse(kind)
    if kind is InterpKind.BILINEAR:
        raise ValueError("use construct_bilinear for the bilinear kind")
    size = tuple(size)
    _check_shapes(w, p, size, sigmas)
    hs, _, _ = _profiles(p, sigmas, size, kind)
    norm = eps + np.prod([h.sum(-1) for h in hs], axis=0)
    ax = _AXES[: len(size)]
    subs = "cim," + ",".join("cim" + a for a in ax) + "->ci" + ax
    return np.einsum(subs, w / norm, *hs, optimize=True)


def backward_interp(grad_kernel, w, p, sigmas, size, kind=InterpKind.GAUSS, eps: float = EPS):
    """Exact gradient of <grad_kernel, K> through the normaliser; returns (gw, gp, gsigma)."""
    kind = InterpKind.parse(kind)
    size = tuple(size)
    _check_shapes(w, p, size, sigmas)
    if grad_kernel.shape != w.shape[:2] + size:
        raise ValueError(f"grad shape {grad_kernel.shape} != {w.shape[:2] + size}")
    hs, dxs, dss = _profiles(p, sigmas, size, kind)
    sums = [h.sum(-1) for h in hs]
    norm = eps + np.prod(sums, axis=0)
    q = _contract(grad_kernel, hs)
    gw = q / norm
    gp = np.zeros(p.shape, dtype=gw.dtype)
    gs = np.zeros(p.shape, dtype=gw.dtype)
    for a in range(len(size)):
        rest = np.prod([s for b, s in enumerate(sums) if b != a], axis=0) if len(size) > 1 else 1.0
        for out, dh in ((gp, dxs[a]), (gs, dss[a])):
            dq = _contract(grad_kernel, hs[:a] + [dh] + hs[a + 1 :])
            dnorm = dh.sum(-1) * rest
            out[a] = w * (dq * norm - q * dnorm) / norm**2
    return gw, gp, gs
