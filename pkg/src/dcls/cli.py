"""Command-line entry point.  Exit codes: 0 success, 1 failure, 2 usage error."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import conv as convmod
from . import experiments, gradcheck, nn, receptive_field, tensor
from .kernel import DclsParams


class UsageError(Exception):
    pass


def _ints(text: str | None, name: str):
    if text is None:
        return None
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated integers, got {text!r}") from None
    return vals[0] if len(vals) == 1 else vals


def _out_dir(args, default: str) -> Path:
    return Path(args.out or default)


def _command_line(argv) -> str:
    return "dcls " + " ".join(argv)


# ---------------------------------------------------------------------------


def cmd_gradcheck(args, argv) -> int:
    scopes = list(gradcheck.SUITES) if args.scope == "all" else [args.scope]
    ok = True
    for scope in scopes:
        report = gradcheck.SUITES[scope](args.instances, args.seed)
        print(report.line())
        ok &= report.passed
    return 0 if ok else 1


def cmd_conv(args, argv) -> int:
    dtype = tensor.as_dtype(args.dtype)
    x = tensor.load(args.input).numpy().astype(dtype)
    w = tensor.load(args.weight).numpy().astype(dtype)
    b = tensor.load(args.bias).numpy().astype(dtype) if args.bias else None
    nd = w.ndim - 2
    if nd < 1:
        raise UsageError("weight must have shape (C_out, C_in/groups, *kernel)")

    def spatial(v, name):
        v = _ints(v, name)
        return v if v is None or isinstance(v, tuple) else (v,) * nd

    spec = convmod.ConvSpec(tuple(w.shape[2:]), spatial(args.stride, "stride"), spatial(args.dilation, "dilation"),
                            spatial(args.padding, "padding"), args.groups)
    y = convmod.conv_forward(x, w, b, spec)
    if args.out:
        tensor.save(args.out, y)
    print(f"output shape {tuple(y.shape)}")
    if args.check:
        ref = convmod.conv_direct(x.astype(np.float64), w.astype(np.float64),
                                  None if b is None else b.astype(np.float64), spec)
        err = float(np.max(np.abs(ref - y), initial=0.0))
        tol = 1e-10 if dtype == np.float64 else 1e-4
        print(f"oracle max abs err {err:.3e} (tolerance {tol:.0e})")
        return 0 if err < tol else 1
    return 0


def cmd_rf(args, argv) -> int:
    if args.chain in receptive_field.NAMED_CHAINS:
        chain = receptive_field.NAMED_CHAINS[args.chain]()
    else:
        try:
            chain = receptive_field.parse_chain(args.chain)
        except ValueError as e:
            raise UsageError(f"chain must be one of {', '.join(receptive_field.NAMED_CHAINS)} "
                             f"or 'k,s[,df];...': {e}") from None
    rows = receptive_field.rf_table(chain)
    stream = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["index", "layer", "kernel", "stride", "dilation", "receptive_field"])
        for i, (layer, (name, r)) in enumerate(zip(chain, rows)):
            w.writerow([i, name, layer.kernel, layer.stride, layer.dilation, r])
    finally:
        if args.out:
            stream.close()
    return 0


@dataclass
class ErfConfig:
    model: str = "dcls"
    layers: int = 3
    channels: int = 4
    kernel: int = 3
    kernel_count: int = 9
    dilated_size: int = 7
    kind: str = "gauss"
    image_size: int = 33
    batch: int = 8


def _erf_model(c: ErfConfig, rng, dtype):
    layers = []
    for i in range(c.layers):
        cin = 1 if i == 0 else c.channels
        if c.model == "dcls":
            layers.append(nn.DclsConv(cin, c.channels, c.kernel_count, c.dilated_size, c.kind, rng=rng, dtype=dtype))
        elif c.model == "conv":
            k = (c.kernel, c.kernel)
            layers.append(nn.Conv(cin, c.channels, k, padding=(c.kernel // 2,) * 2, rng=rng, dtype=dtype))
        else:
            raise UsageError(f"erf model must be dcls or conv, got {c.model!r}")
        layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def cmd_erf(args, argv) -> int:
    sections = cfgmod.load({"erf": ErfConfig()}, args.config, args.overrides)
    c = sections["erf"]
    rng = np.random.default_rng(args.seed)
    model = _erf_model(c, rng, np.float64)
    x = rng.standard_normal((c.batch, 1, c.image_size, c.image_size))
    heat = receptive_field.erf_estimate(model, x)
    out = _out_dir(args, "runs/erf")
    out.mkdir(parents=True, exist_ok=True)
    tensor.save(out / "erf.dclt", heat.astype(tensor.as_dtype(args.dtype)))
    cfgmod.write_resolved(out, sections, _command_line(argv))
    print(f"wrote {out / 'erf.dclt'} shape {heat.shape}")
    return 0


def cmd_construct_kernel(args, argv) -> int:
    w = tensor.load(args.weights).numpy()
    p = tensor.load(args.positions).numpy()
    s = tensor.load(args.sigmas).numpy() if args.sigmas else None
    size = _ints(args.size, "size")
    size = size if isinstance(size, tuple) else (size,)
    k = DclsParams(w, p, size, s, args.kind).construct().astype(tensor.as_dtype(args.dtype))
    tensor.save(args.out, k)
    print(f"kernel shape {k.shape}, sum {float(k.sum()):.6g}")
    return 0


@dataclass
class Toy2dSweep:
    sizes: str = "1,3,7"
    seeds: str = "0,1,2"
    fixed_positions_control: bool = True


def cmd_train_toy2d(args, argv) -> int:
    sections = cfgmod.load({"toy2d": experiments.Toy2dConfig(dtype=args.dtype), "sweep": Toy2dSweep()},
                           args.config, args.overrides)
    sweep = sections["sweep"]
    if args.seed is not None:
        sweep = sections["sweep"] = replace(sweep, seeds=str(args.seed))
    sizes, seeds = _ints(sweep.sizes, "sizes"), _ints(sweep.seeds, "seeds")
    sizes = sizes if isinstance(sizes, tuple) else (sizes,)
    seeds = seeds if isinstance(seeds, tuple) else (seeds,)
    out = _out_dir(args, "runs/toy2d")
    cfgmod.write_resolved(out, sections, _command_line(argv))
    results = experiments.sweep_toy2d(sections["toy2d"], sizes, seeds, sweep.fixed_positions_control, out)
    for arm, s, seed, acc in results:
        print(f"{arm:16s} size {s:2d} seed {seed}: test acc {acc:.3f}")
    return 0


def cmd_train_snn(args, argv) -> int:
    base = experiments.SnnExperimentConfig(dtype=args.dtype)
    if args.mode:
        base = replace(base, mode=args.mode)
    sections = cfgmod.load({"snn": base}, args.config, args.overrides)
    if args.mode:
        sections["snn"] = replace(sections["snn"], mode=args.mode)
    if args.seed is not None:
        sections["snn"] = replace(sections["snn"], seed=args.seed)
    c = sections["snn"]
    out = _out_dir(args, f"runs/snn-{c.mode}-seed{c.seed}")
    cfgmod.write_resolved(out, sections, _command_line(argv))
    res = experiments.train_snn(c, out)
    print(f"{c.mode} seed {c.seed}: test acc {res.test_acc:.3f} (discrete), "
          f"{res.test_acc_continuous:.3f} (continuous)")
    return 0


def cmd_export_histograms(args, argv) -> int:
    path = experiments.export_histograms(args.run_dir, args.out)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--dtype", choices=["f32", "f64"], default="f32")

    p = argparse.ArgumentParser(prog="dcls", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suites")
    g.add_argument("scope", choices=list(gradcheck.SUITES) + ["all"])
    g.add_argument("--instances", type=int, default=200)
    g.set_defaults(func=cmd_gradcheck)

    c = sub.add_parser("conv", parents=[common], help="convolve tensors read from disk")
    c.add_argument("--input", required=True)
    c.add_argument("--weight", required=True)
    c.add_argument("--bias")
    c.add_argument("--stride")
    c.add_argument("--dilation")
    c.add_argument("--padding")
    c.add_argument("--groups", type=int, default=1)
    c.add_argument("--check", action="store_true", help="compare with the direct-definition oracle")
    c.set_defaults(func=cmd_conv)

    r = sub.add_parser("rf", parents=[common], help="receptive-field table as CSV")
    r.add_argument("chain", help=f"{', '.join(receptive_field.NAMED_CHAINS)} or 'k,s[,df];...'")
    r.set_defaults(func=cmd_rf)

    e = sub.add_parser("erf", parents=[common], help="effective receptive field heat map")
    e.add_argument("overrides", nargs="*", metavar="key=value")
    e.set_defaults(func=cmd_erf)

    k = sub.add_parser("construct-kernel", parents=[common], help="build a dense kernel from DCLS parameters")
    k.add_argument("--weights", required=True)
    k.add_argument("--positions", required=True)
    k.add_argument("--sigmas")
    k.add_argument("--size", required=True, help="dilated kernel size, e.g. 7,7")
    k.add_argument("--kind", choices=["bilinear", "triangle", "gauss"], default="bilinear")
    k.set_defaults(func=cmd_construct_kernel)

    t = sub.add_parser("train-toy2d", parents=[common], help="kernel-size sweep on the toy 2D task")
    t.add_argument("overrides", nargs="*", metavar="key=value")
    t.set_defaults(func=cmd_train_toy2d)

    s = sub.add_parser("train-snn", parents=[common], help="one SNN delay-learning ablation arm")
    s.add_argument("--mode", choices=list(experiments.SNN_MODES))
    s.add_argument("overrides", nargs="*", metavar="key=value")
    s.set_defaults(func=cmd_train_snn)

    h = sub.add_parser("export-histograms", parents=[common], help="position/delay histograms of a run")
    h.add_argument("run_dir")
    h.set_defaults(func=cmd_export_histograms)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.seed is None and args.func in (cmd_gradcheck, cmd_erf):
        args.seed = 0
    if not hasattr(args, "overrides"):
        args.overrides = []
    try:
        return args.func(args, argv)
    except (UsageError, cfgmod.ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
