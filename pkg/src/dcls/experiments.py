"""Desk-scale training runs: SNN delay learning ablations and the toy 2D classifier."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import nn, snn, tensor
from .kernel import clamp_positions
from .training import (Adam, ParamGroup, SigmaSchedule, clamp_range, cosine_annealing, one_cycle,
                       position_group, position_speed)

SNN_MODES = ("learn-delays", "fixed-random-delays", "no-delays", "fixed-weights", "constant-sigma")


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


# ---------------------------------------------------------------------------
# spiking network


@dataclass
class SnnExperimentConfig:
    mode: str = "learn-delays"
    seed: int = 0
    # data
    dataset: str = "delayed-pattern"
    n_train: int = 1000
    n_test: int = 500
    n_channels: int = 100
    T: int = 40
    n_classes: int = 10
    max_offset: int = 15
    jitter: int = 0
    noise_rate: float = 0.0
    # model
    n_hidden: int = 50
    n_layers: int = 2
    T_d: int = 16
    tau: float = 1.05
    threshold: float = 1.0
    surrogate_alpha: float = 2.0
    batchnorm: bool = True
    dropout: float = 0.0
    connections: int = 0
    sparse_readout: bool = False
    weight_scale: float = 1.0
    # optimisation
    epochs: int = 10
    batch_size: int = 50
    lr_w: float = 5e-3
    lr_d: float = 0.3
    weight_decay: float = 1e-5
    sigma_min: float = 0.5
    sigma_decay_fraction: float = 0.6  # share of epochs spent decaying sigma to sigma_min
    dtype: str = "f32"

    def __post_init__(self):
        if self.mode not in SNN_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {', '.join(SNN_MODES)}")

    def model_config(self) -> snn.SnnConfig:
        return snn.SnnConfig(
            n_in=self.n_channels, n_hidden=self.n_hidden, n_layers=self.n_layers, n_classes=self.n_classes,
            T_d=1 if self.mode == "no-delays" else self.T_d, tau=self.tau, threshold=self.threshold,
            surrogate_alpha=self.surrogate_alpha, batchnorm=self.batchnorm, dropout=self.dropout,
            connections=self.connections, sparse_readout=self.sparse_readout, weight_scale=self.weight_scale)


@dataclass
class SnnResult:
    rows: list
    test_acc: float
    test_acc_continuous: float
    delays: list


SNN_METRICS = ["epoch", "loss", "train_acc", "test_acc", "test_acc_continuous", "V_P", "sigma"]


def snn_accuracy(net: snn.SNN, x, y, batch_size=250) -> float:
    net.eval()
    hits = 0
    for i in range(0, len(y), batch_size):
        U = net.forward(x[i : i + batch_size])
        hits += int((snn.readout_loss(U, y[i : i + batch_size])[2].argmax(1) == y[i : i + batch_size]).sum())
    net.train()
    return hits / len(y)


def train_snn(cfg: SnnExperimentConfig, out_dir: str | Path | None = None) -> SnnResult:
    """Train one ablation arm; optionally write metrics, histograms and delay snapshots."""
    dtype = tensor.as_dtype(cfg.dtype)
    x, y = snn.make_synthetic_dataset(cfg.dataset, cfg.n_train + cfg.n_test, cfg.seed, cfg.n_channels, cfg.T,
                                      cfg.n_classes, cfg.max_offset, cfg.jitter, cfg.noise_rate)
    x = x.astype(dtype)
    xtr, ytr, xte, yte = x[: cfg.n_train], y[: cfg.n_train], x[cfg.n_train :], y[cfg.n_train :]

    mcfg = cfg.model_config()
    net = snn.SNN(mcfg, np.random.default_rng(cfg.seed), dtype)
    weights = [p for p in net.params() if p.kind != "position"]
    delays = [dl.delay for dl in net.delay_layers]
    if cfg.mode == "no-delays":
        for d in delays:
            d.data[...] = 0
    learn_d = cfg.mode in ("learn-delays", "fixed-weights", "constant-sigma")
    w_scale = 0.0 if cfg.mode == "fixed-weights" else 1.0
    wgroup = ParamGroup([dl.weight for dl in net.delay_layers], lr=cfg.lr_w, lr_scale=w_scale,
                        weight_decay=cfg.weight_decay, name="weights")
    other = ParamGroup([p for p in weights if all(p is not q for q in wgroup.params)], lr=cfg.lr_w,
                       name="bn")
    dgroup = position_group(delays, lr=cfg.lr_d, lr_scale=1.0 if learn_d else 0.0,
                            clamp=clamp_range(0, mcfg.T_d - 1))
    opt = Adam([wgroup, other, dgroup])

    if cfg.mode == "constant-sigma" or mcfg.T_d == 1:
        sched = SigmaSchedule(cfg.sigma_min, cfg.sigma_min, 1)
    else:
        decay = max(round(cfg.sigma_decay_fraction * (cfg.epochs - 1)), 1)
        sched = SigmaSchedule(max(mcfg.T_d / 2, cfg.sigma_min), cfg.sigma_min, decay)

    rng = np.random.default_rng(cfg.seed + 1)
    steps_per_epoch = math.ceil(cfg.n_train / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    step = 0
    rows, snapshots = [], [[d.data.copy() for d in delays]]
    for epoch in range(cfg.epochs):
        sigma = sched.value(epoch)
        net.set_sigma(sigma)
        prev = np.concatenate([d.data.ravel() for d in delays]).astype(np.float64)
        loss_sum = hits = 0.0
        for idx in _batches(cfg.n_train, cfg.batch_size, rng):
            wgroup.lr = other.lr = one_cycle(step, total, cfg.lr_w)
            dgroup.lr = cosine_annealing(step, total, cfg.lr_d)
            opt.zero_grad()
            U = net.forward(xtr[idx])
            loss, g, pred = snn.readout_loss(U, ytr[idx])
            net.backward(g.astype(dtype))
            opt.step()
            loss_sum += loss * len(idx)
            hits += int((pred.argmax(1) == ytr[idx]).sum())
            step += 1
        cur = np.concatenate([d.data.ravel() for d in delays]).astype(np.float64)
        acc_cont = snn_accuracy(net, xte, yte)
        net.set_discrete(True)
        acc_disc = snn_accuracy(net, xte, yte)
        net.set_discrete(False)
        rows.append([epoch, loss_sum / cfg.n_train, hits / cfg.n_train, acc_disc, acc_cont,
                     position_speed(cur, prev), sigma])
        snapshots.append([d.data.copy() for d in delays])

    result = SnnResult(rows, rows[-1][3], rows[-1][4], snapshots)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "metrics.csv",
                  SNN_METRICS, rows)
        pos = out / "positions"
        pos.mkdir(exist_ok=True)
        for e, snap in enumerate(snapshots):
            for li, d in enumerate(snap):
                tensor.save(pos / f"epoch{e:03d}_layer{li}.dclt", d.astype(np.float64))
        write_csv(out / "delay_histogram.csv", ["epoch", "layer", "bin_lo", "bin_hi", "count"],
                  histogram_rows(snapshots, lo=0.0, hi=float(mcfg.T_d - 1), masks=[dl.mask for dl in net.delay_layers]))
    return result


# ---------------------------------------------------------------------------
# histograms

BIN_WIDTH = 0.25


def histogram(values, lo: float, hi: float, width: float = BIN_WIDTH):
    """Counts over fixed bins ``[lo + i w, lo + (i+1) w)``; the last bin includes ``hi``."""
    n = max(1, math.ceil((hi - lo) / width - 1e-9))
    edges = lo + width * np.arange(n + 1)
    idx = np.clip(np.floor((np.asarray(values, dtype=np.float64) - lo) / width).astype(int), 0, n - 1)
    return edges, np.bincount(idx.ravel(), minlength=n)


def histogram_rows(snapshots, lo, hi, masks=None, width=BIN_WIDTH):
    rows = []
    for e, snap in enumerate(snapshots):
        for li, d in enumerate(snap):
            vals = d if masks is None or masks[li] is None else d[masks[li] > 0]
            edges, counts = histogram(vals, lo, hi, width)
            rows += [[e, li, float(edges[i]), float(edges[i + 1]), int(c)] for i, c in enumerate(counts)]
    return rows


def export_histograms(run_dir: str | Path, out_path: str | Path | None = None, width: float = BIN_WIDTH) -> Path:
    """Rebuild a histogram CSV from the position snapshots saved in ``run_dir``."""
    run = Path(run_dir)
    files = sorted((run / "positions").glob("epoch*_layer*.dclt")) if (run / "positions").is_dir() else []
    if not files:
        raise FileNotFoundError(f"no position snapshots under {run}")
    grouped: dict[int, dict[int, np.ndarray]] = {}
    for f in files:
        e, li = f.stem.removeprefix("epoch").split("_layer")
        grouped.setdefault(int(e), {})[int(li)] = tensor.load(f).numpy()
    values = np.concatenate([a.ravel() for layers in grouped.values() for a in layers.values()])
    lo = math.floor(values.min() / width) * width
    hi = max(lo + width, float(values.max()))
    snapshots = [[grouped[e][li] for li in sorted(grouped[e])] for e in sorted(grouped)]
    out = Path(out_path) if out_path else run / "histograms.csv"
    write_csv(out, ["epoch", "layer", "bin_lo", "bin_hi", "count"], histogram_rows(snapshots, lo, hi, width=width))
    return out


# ---------------------------------------------------------------------------
# toy 2D classifier


@dataclass
class Toy2dConfig:
    seed: int = 0
    image_size: int = 32
    n_train: int = 600
    n_test: int = 300
    channels: int = 8
    n_layers: int = 3
    kernel_count: int = 4
    dilated_size: int = 7
    kind: str = "gauss"
    pool: str = "max"
    bias: bool = False
    position_init: str = "image-uniform"
    epochs: int = 12
    batch_size: int = 30
    lr: float = 1e-2
    weight_decay: float = 1e-4
    position_lr_scale: float = 5.0
    dtype: str = "f32"


TOY2D_OFFSETS = ((0, 4), (4, 0), (0, 16), (16, 0))


def make_toy2d_dataset(n: int, seed: int, size: int = 32, offsets=TOY2D_OFFSETS, pairs: int = 6,
                       noise: float = 0.05):
    """Images holding ``pairs`` dot pairs; the class is the displacement shared by all pairs.

    Every image has the same number of equally bright dots, so pixel
    statistics carry no class information: a model must relate positions.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % len(offsets)
    rng.shuffle(labels)
    x = rng.normal(0.0, noise, (n, 1, size, size))
    for i, c in enumerate(labels):
        dy, dx = offsets[c]
        y0 = rng.integers(0, size - dy, pairs)
        x0 = rng.integers(0, size - dx, pairs)
        x[i, 0, y0, x0] += 1.0
        x[i, 0, y0 + dy, x0 + dx] += 1.0
    return x, labels


class Toy2dNet(nn.Sequential):
    """Stem (k=2, s=2) followed by DCLS-Gauss layers, global pooling and a linear head."""

    def __init__(self, cfg: Toy2dConfig, rng, dtype):
        layers = [nn.Conv(1, cfg.channels, (2, 2), stride=(2, 2), bias=cfg.bias, rng=rng, dtype=dtype), nn.ReLU()]
        self.dcls = []
        for _ in range(cfg.n_layers):
            layer = nn.DclsConv(cfg.channels, cfg.channels, cfg.kernel_count, cfg.dilated_size, cfg.kind,
                                bias=cfg.bias, rng=rng, dtype=dtype, position_init=cfg.position_init)
            self.dcls.append(layer)
            layers += [layer, nn.ReLU()]
        if cfg.pool not in ("max", "avg"):
            raise ValueError(f"unknown pool {cfg.pool!r}")
        pool = nn.GlobalMaxPool() if cfg.pool == "max" else nn.GlobalAvgPool()
        layers += [pool, nn.Linear(cfg.channels, len(TOY2D_OFFSETS), rng=rng, dtype=dtype)]
        super().__init__(*layers)


def train_toy2d(cfg: Toy2dConfig) -> tuple[float, list]:
    """Train once; returns final test accuracy and per-epoch rows."""
    dtype = tensor.as_dtype(cfg.dtype)
    x, y = make_toy2d_dataset(cfg.n_train + cfg.n_test, cfg.seed, cfg.image_size)
    x = x.astype(dtype)
    xtr, ytr, xte, yte = x[: cfg.n_train], y[: cfg.n_train], x[cfg.n_train :], y[cfg.n_train :]
    net = Toy2dNet(cfg, np.random.default_rng(cfg.seed), dtype)
    pos = [p for p in net.params() if p.kind in ("position", "sigma")]
    rest = [p for p in net.params() if p.kind not in ("position", "sigma")]
    size = (cfg.dilated_size,) * 2
    groups = [ParamGroup(rest, lr=cfg.lr, weight_decay=cfg.weight_decay, name="weights")]
    pgroup = position_group([p for p in pos if p.kind == "position"], lr=cfg.lr,
                            clamp=lambda a: clamp_positions(a, size, out=a), lr_scale=cfg.position_lr_scale)
    sgroup = position_group([p for p in pos if p.kind == "sigma"], lr=cfg.lr, lr_scale=cfg.position_lr_scale,
                            name="sigmas")
    opt = Adam(groups + [pgroup, sgroup])
    rng = np.random.default_rng(cfg.seed + 1)
    total = cfg.epochs * math.ceil(cfg.n_train / cfg.batch_size)
    step = 0
    rows = []
    for epoch in range(cfg.epochs):
        prev = np.concatenate([p.data.ravel() for p in pgroup.params]).astype(np.float64)
        loss_sum = hits = 0.0
        for idx in _batches(cfg.n_train, cfg.batch_size, rng):
            for g in opt.groups:
                g.lr = cosine_annealing(step, total, cfg.lr)
            opt.zero_grad()
            logits = net.forward(xtr[idx])
            loss, g = nn.cross_entropy(logits, ytr[idx])
            net.backward(g)
            opt.step()
            loss_sum += loss * len(idx)
            hits += int((logits.argmax(1) == ytr[idx]).sum())
            step += 1
        cur = np.concatenate([p.data.ravel() for p in pgroup.params]).astype(np.float64)
        test_acc = float((net.forward(xte).argmax(1) == yte).mean())
        rows.append([epoch, loss_sum / cfg.n_train, hits / cfg.n_train, test_acc, position_speed(cur, prev)])
    return rows[-1][3], rows


TOY2D_METRICS = ["epoch", "loss", "train_acc", "test_acc", "V_P"]


def sweep_toy2d(cfg: Toy2dConfig, sizes=(1, 3, 7), seeds=(0, 1, 2), fixed_positions_control=True,
                out_dir: str | Path | None = None):
    """Accuracy as a function of dilated kernel size, plus an optional frozen-positions control.

    The control trains the largest size with a position learning-rate scale of 0.
    """
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    runs = [("learned", s, cfg.position_lr_scale) for s in sizes]
    if fixed_positions_control:
        runs.append(("fixed-positions", max(sizes), 0.0))
    results = []
    for seed in seeds:
        for arm, s, scale in runs:
            acc, rows = train_toy2d(replace(cfg, seed=seed, dilated_size=s, position_lr_scale=scale))
            results.append([arm, s, seed, acc])
            if out is not None:
                write_csv(out / f"metrics_{arm}_size{s}_seed{seed}.csv", TOY2D_METRICS, rows)
    if out is not None:
        write_csv(out / "accuracy_vs_size.csv", ["arm", "dilated_size", "seed", "test_acc"], results)
    return results


def config_dict(cfg) -> dict:
    return asdict(cfg)
