import csv
import io
from contextlib import redirect_stdout
from dataclasses import dataclass

import numpy as np
import pytest

import dcls.kernel
from dcls import cli, config, tensor
from dcls.tensor import Tensor

TINY_SNN = ["n_train=40", "n_test=20", "n_channels=8", "T=20", "n_classes=2", "max_offset=6",
            "n_hidden=6", "T_d=5", "epochs=2", "batch_size=20"]
TINY_TOY = ["toy2d.n_train=20", "toy2d.n_test=10", "toy2d.channels=2",
            "toy2d.n_layers=1", "toy2d.epochs=1", "toy2d.batch_size=10", "sweep.sizes=3",
            "sweep.fixed_positions_control=false"]


def run(*argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(list(argv))
    return code, buf.getvalue()


@dataclass
class A:
    n: int = 1
    x: float = 0.5
    flag: bool = False
    name: str = "a"


@dataclass
class B:
    n: int = 2


def test_load_file_and_overrides(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[a]\nn = 4\nflag = yes\n[b]\nn = 9\n")
    out = config.load({"a": A(), "b": B()}, f, ["a.x=0.25", "name=zz"])
    assert out["a"] == A(4, 0.25, True, "zz")
    assert out["b"] == B(9)


@pytest.mark.parametrize("override", ["nope=1", "a.nope=1", "n=3", "a.n=abc", "a.flag=maybe", "c.n=1", "justtext"])
def test_bad_overrides(override):
    with pytest.raises(config.ConfigError):
        config.load({"a": A(), "b": B()}, overrides=[override])


def test_unknown_section_in_file(tmp_path):
    f = tmp_path / "c.ini"
    f.write_text("[zzz]\nn = 1\n")
    with pytest.raises(config.ConfigError):
        config.load({"a": A()}, f)


def test_dump_records_command_and_version():
    text = config.dump({"a": A()}, "dcls demo")
    assert "[run]" in text and "dcls demo" in text and config.version_string() in text
    assert config.version_string().startswith("0.1.0")


def test_cli_usage_errors():
    assert run("bogus")[0] == 2
    assert run("rf", "1,2,3,4,5")[0] == 2
    assert run("train-snn", "nosuchkey=1", "--out", "/nonexistent/never")[0] == 2


def test_rf_csv(tmp_path):
    code, out = run("rf", "convnext-t")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["index", "layer", "kernel", "stride", "dilation", "receptive_field"]
    assert rows[-1][-1] == "1688"
    assert run("rf", "3,1;3,2", "--out", str(tmp_path / "rf.csv"))[0] == 0
    assert (tmp_path / "rf.csv").read_text().splitlines()[-1].endswith(",5")


def test_gradcheck_exit_codes(monkeypatch):
    code, out = run("gradcheck", "dcls2d", "--instances", "5")
    assert code == 0 and "PASS" in out
    real = dcls.kernel.backward_bilinear

    def corrupted(*a, **k):
        gw, gp = real(*a, **k)[:2]
        return (gw, gp * 1.1) + tuple(real(*a, **k)[2:])

    monkeypatch.setattr(dcls.kernel, "backward_bilinear", corrupted)
    code, out = run("gradcheck", "dcls2d", "--instances", "5")
    assert code == 1 and "FAIL" in out


def test_conv_check(tmp_path):
    rng = np.random.default_rng(0)
    tensor.save(tmp_path / "x.dclt", Tensor(rng.standard_normal((1, 2, 6, 6))))
    tensor.save(tmp_path / "w.dclt", Tensor(rng.standard_normal((3, 2, 3, 3))))
    code, out = run("conv", "--input", str(tmp_path / "x.dclt"), "--weight", str(tmp_path / "w.dclt"),
                    "--stride", "2", "--padding", "1", "--dtype", "f64", "--check", "--out", str(tmp_path / "y.dclt"))
    assert code == 0 and "(1, 3, 3, 3)" in out
    assert tensor.load(tmp_path / "y.dclt").shape == (1, 3, 3, 3)
    assert run("conv", "--input", str(tmp_path / "missing.dclt"), "--weight", str(tmp_path / "w.dclt"))[0] == 1


def test_construct_kernel(tmp_path):
    tensor.save(tmp_path / "w.dclt", Tensor(np.ones((1, 1, 1))))
    tensor.save(tmp_path / "p.dclt", Tensor(np.array([0.5, 0.0]).reshape(2, 1, 1, 1)))
    code, _ = run("construct-kernel", "--weights", str(tmp_path / "w.dclt"), "--positions", str(tmp_path / "p.dclt"),
                  "--size", "3,3", "--dtype", "f64", "--out", str(tmp_path / "k.dclt"))
    assert code == 0
    k = tensor.load(tmp_path / "k.dclt").numpy()
    assert k[0, 0, 1, 1] == 0.5 and k[0, 0, 2, 1] == 0.5


def test_export_histograms_needs_snapshots(tmp_path):
    assert run("export-histograms", str(tmp_path))[0] == 1


def test_train_snn_is_deterministic_and_exports(tmp_path):
    outs = []
    for name in ("a", "b"):
        code, _ = run("train-snn", "--mode", "learn-delays", "--seed", "3", "--out", str(tmp_path / name), *TINY_SNN)
        assert code == 0
        outs.append((tmp_path / name / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]
    resolved = (tmp_path / "a" / "config.resolved.ini").read_text()
    assert "seed = 3" in resolved and "version" in resolved
    assert run("export-histograms", str(tmp_path / "a"))[0] == 0
    assert (tmp_path / "a" / "histograms.csv").exists()


def test_train_toy2d_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        code, _ = run("train-toy2d", "--seed", "1", "--out", str(tmp_path / name), *TINY_TOY)
        assert code == 0
        outs.append((tmp_path / name / "accuracy_vs_size.csv").read_bytes())
    assert outs[0] == outs[1]


def test_erf(tmp_path):
    code, _ = run("erf", "--out", str(tmp_path), "image_size=9", "layers=1", "batch=2")
    assert code == 0
    heat = tensor.load(tmp_path / "erf.dclt").numpy()
    assert heat.shape == (9, 9)
