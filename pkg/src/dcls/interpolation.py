"""Interpolation weightings used to spread a kernel element over grid cells.

All functions are vectorised over numpy arrays.  ``sigma`` is the raw learnable
value; the effective scale is ``sigma0 + |sigma|`` so that ``sigma = 0`` is
still trainable.  The derivative of ``|sigma|`` at zero is taken as +1.
"""

from __future__ import annotations

import enum

import numpy as np


class InterpKind(enum.Enum):
    BILINEAR = "bilinear"
    TRIANGLE = "triangle"
    GAUSS = "gauss"

    @property
    def sigma0(self) -> float:
        return 0.27 if self is InterpKind.GAUSS else 1.0

    @classmethod
    def parse(cls, v) -> "InterpKind":
        return v if isinstance(v, cls) else cls(str(v).lower())


def _sign(sigma):
    return np.where(np.asarray(sigma) < 0, -1.0, 1.0)


# Raw shapes, parameterised directly by the effective scale.

def gaussian(x, scale):
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    return np.exp(-0.5 * (x / scale) ** 2)


def gaussian_dx(x, scale):
    return -x / scale**2 * gaussian(x, scale)


def gaussian_dscale(x, scale):
    return x**2 / scale**3 * gaussian(x, scale)


def triangle(x, scale):
    return np.maximum(0.0, scale - np.abs(x))


def triangle_dx(x, scale):
    # right-sided derivative: slope -1 on [0, scale), +1 on [-scale, 0)
    x = np.asarray(x)
    return np.where((x >= 0) & (x < scale), -1.0, np.where((x < 0) & (x >= -scale), 1.0, 0.0))


def weight(kind, x, sigma=0.0):
    kind = InterpKind.parse(kind)
    if kind is InterpKind.BILINEAR:
        return triangle(x, 1.0)
    scale = kind.sigma0 + np.abs(sigma)
    if kind is InterpKind.TRIANGLE:
        return triangle(x, scale)
    return gaussian(x, scale)


def d_weight_dx(kind, x, sigma=0.0):
    kind = InterpKind.parse(kind)
    if kind is InterpKind.BILINEAR:
        return triangle_dx(x, 1.0)
    scale = kind.sigma0 + np.abs(sigma)
    if kind is InterpKind.TRIANGLE:
        return triangle_dx(x, scale)
    return gaussian_dx(x, scale)


def d_weight_dsigma(kind, x, sigma=0.0):
    kind = InterpKind.parse(kind)
    if kind is InterpKind.BILINEAR:
        return np.zeros_like(np.asarray(x, dtype=float) + np.asarray(sigma, dtype=float))
    scale = kind.sigma0 + np.abs(sigma)
    if kind is InterpKind.TRIANGLE:
        # at the support edge the +|sigma| direction opens the support
        x = np.asarray(x)
        active = (scale - np.abs(x) > 0) | ((scale == np.abs(x)) & (np.asarray(sigma) >= 0))
        return np.where(active, 1.0, 0.0) * _sign(sigma)
    return gaussian_dscale(x, scale) * _sign(sigma)
