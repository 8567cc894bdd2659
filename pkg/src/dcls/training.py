"""Optimiser, schedules and the position-specific training techniques."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .interpolation import InterpKind
from .kernel import position_bounds
from .nn import Param

POSITION_LR_SCALE = 5.0


@dataclass
class ParamGroup:
    """Parameters sharing a learning-rate scale, weight decay and clamp rule.

    ``lr`` is the base rate written by a scheduler; the step uses
    ``lr * lr_scale``.  ``clamp`` is applied in place after every step.
    """

    params: list[Param]
    lr: float = 1e-3
    lr_scale: float = 1.0
    weight_decay: float = 0.0
    clamp: Callable[[np.ndarray], None] | None = None
    name: str = ""

    def __post_init__(self):
        self.params = list(self.params)


def position_group(params: Iterable[Param], lr: float, clamp=None, lr_scale: float = POSITION_LR_SCALE,
                   name: str = "positions") -> ParamGroup:
    """Group for positions / sigmas: scaled learning rate and no weight decay."""
    return ParamGroup(list(params), lr=lr, lr_scale=lr_scale, weight_decay=0.0, clamp=clamp, name=name)


class Adam:
    """Adam with decoupled weight decay (AdamW form)."""

    def __init__(self, groups: list[ParamGroup], betas=(0.9, 0.999), eps: float = 1e-8):
        self.groups = groups
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.state: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for g in groups:
            if g.lr * g.lr_scale < 0:
                raise ValueError("learning rate must be non-negative")
            for p in g.params:
                self.state[id(p)] = (np.zeros_like(p.data), np.zeros_like(p.data))

    def zero_grad(self):
        for g in self.groups:
            for p in g.params:
                p.zero_grad()

    def step(self):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for g in self.groups:
            lr = g.lr * g.lr_scale
            for p in g.params:
                m, v = self.state[id(p)]
                m *= self.b1
                m += (1 - self.b1) * p.grad
                v *= self.b2
                v += (1 - self.b2) * p.grad**2
                if lr == 0:
                    continue
                if g.weight_decay:
                    p.data -= (lr * g.weight_decay * p.data).astype(p.data.dtype)
                p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)
            if g.clamp is not None:
                for p in g.params:
                    g.clamp(p.data)


def adam_reference(theta: float, grads, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> list[float]:
    """Scalar Adam written out longhand; used as an independent check."""
    b1, b2 = betas
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        out.append(theta)
    return out


# ---------------------------------------------------------------------------
# schedules


def cosine_annealing(step: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    t = min(max(step, 0), total)
    return lr_min + 0.5 * (lr0 - lr_min) * (1 + math.cos(math.pi * t / total))


def one_cycle(step: int, total: int, max_lr: float, pct_start: float = 0.3,
              div_factor: float = 25.0, final_div_factor: float = 1e4) -> float:
    """Cosine one-cycle: warm up to ``max_lr`` at ``pct_start * total``, then anneal."""
    initial = max_lr / div_factor
    final = initial / final_div_factor
    peak = pct_start * total
    t = min(max(step, 0), total)
    if t <= peak:
        frac = t / peak if peak > 0 else 1.0
        return initial + 0.5 * (max_lr - initial) * (1 - math.cos(math.pi * frac))
    frac = (t - peak) / (total - peak)
    return final + 0.5 * (max_lr - final) * (1 + math.cos(math.pi * frac))


@dataclass(frozen=True)
class SigmaSchedule:
    """Exponential decay from ``sigma_start`` to ``sigma_min`` over ``total_epochs``."""

    sigma_start: float
    sigma_min: float = 0.5
    total_epochs: int = 1

    def __post_init__(self):
        if self.sigma_start < self.sigma_min or self.sigma_min <= 0 or self.total_epochs < 1:
            raise ValueError("need sigma_start >= sigma_min > 0 and total_epochs >= 1")

    def value(self, epoch: float) -> float:
        t = min(max(epoch, 0), self.total_epochs) / self.total_epochs
        return self.sigma_start * (self.sigma_min / self.sigma_start) ** t


def sigma_value(schedule: SigmaSchedule, epoch: float) -> float:
    return schedule.value(epoch)


# ---------------------------------------------------------------------------
# positions


def init_positions(mode: str, shape, kind=InterpKind.GAUSS, rng=None, max_delay: float | None = None,
                   size=None):
    """Initial (positions, sigmas).

    ``image``: centered N(0, 0.5) positions; sigma 0.23 for Gauss, 0 otherwise.
    ``image-uniform``: positions uniform over the window ``size``; same sigmas.
    ``snn``: delays uniform on [0, max_delay]; sigmas is None.
    """
    rng = rng or np.random.default_rng(0)
    if mode in ("image", "image-uniform"):
        if mode == "image":
            p = rng.normal(0.0, 0.5, shape)
        else:
            if size is None or len(size) != shape[0]:
                raise ValueError("image-uniform needs one window size per position axis")
            lo, hi = position_bounds(size)
            p = np.stack([rng.uniform(lo[a], hi[a], shape[1:]) for a in range(shape[0])])
        kind = InterpKind.parse(kind)
        s = np.full(shape, 0.23 if kind is InterpKind.GAUSS else 0.0)
        return p, s
    if mode == "snn":
        if max_delay is None:
            raise ValueError("snn mode needs max_delay (T_d - 1)")
        return rng.uniform(0.0, max_delay, shape), None
    raise ValueError(f"unknown init mode {mode!r}")


def clamp_range(lo, hi):
    """In-place clamp callable for a :class:`ParamGroup`."""

    def _clamp(a):
        np.clip(a, lo, hi, out=a)

    return _clamp


@dataclass
class SharedPositionStore:
    """One canonical positions (and sigmas) Param per synchronisation group."""

    groups: dict[str, tuple[Param, Param | None]] = field(default_factory=dict)

    def get(self, key: str, factory: Callable[[], tuple[Param, Param | None]]):
        if key not in self.groups:
            self.groups[key] = factory()
        return self.groups[key]

    def params(self) -> list[Param]:
        out = []
        for p, s in self.groups.values():
            out.append(p)
            if s is not None:
                out.append(s)
        return out


def position_speed(current: np.ndarray, previous: np.ndarray) -> float:
    """Mean absolute displacement of a position tensor between two epochs."""
    return float(np.mean(np.abs(np.asarray(current, dtype=np.float64) - previous)))
