import json

import numpy as np
import pytest

from wdce.cli import main
from wdce.data import load, write_trajectories
from wdce.io import load_tensor

SPEC = {"samples_per_class": 6, "T": 8, "V": 5, "salient_freqs": [0.05, 0.1]}
FAST = ["--backbone.n_stgc", "1", "--backbone.n_ssa", "1", "--backbone.channels", "8",
        "--backbone.tcn_kernel", "3", "--train.epochs", "2", "--train.batch_size", "8"]


@pytest.fixture
def dataset(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SPEC))
    out = tmp_path / "d.wdcc"
    assert main(["gen", "--spec", str(spec), "--out", str(out), "--seed", "1"]) == 0
    return out


@pytest.fixture
def trained(tmp_path, dataset):
    out = tmp_path / "run"
    assert main(["train", "--data", str(dataset), "--out", str(out), "--seed", "0", *FAST]) == 0
    return out


def test_print_defaults_echo_published_weights(capsys):
    assert main(["config", "--print-defaults"]) == 0
    doc = json.loads(capsys.readouterr().out)
    t = doc["train"]
    assert (t["alpha"], t["beta"]) == (0.9, 0.1)
    assert (t["lambda_fuse"], t["lambda_salient"], t["lambda_proto"]) == (0.4, 0.2, 0.4)
    assert t["batch_size"] == 64
    assert set(doc) == {"synth", "train", "backbone", "run"}


def test_config_resolves_flags(capsys):
    assert main(["config", "--train.lr", "0.3"]) == 0
    assert json.loads(capsys.readouterr().out)["train"]["lr"] == 0.3


def test_gen_default_size_and_report(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "d")]) == 0
    out = capsys.readouterr().out
    assert "wrote 600 samples" in out
    assert len(load(tmp_path / "d")) == 600
    assert out.count("high/low band distance ratio") == 3


def test_gen_rho_zero_reports_unit_ratio(tmp_path, capsys):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({**SPEC, "rho": 0.0, "sigma": 0.0}))
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 0
    assert "ratio 1.0000" in capsys.readouterr().out


def test_gen_is_byte_identical(tmp_path, dataset):
    spec = tmp_path / "spec.json"
    assert main(["gen", "--spec", str(spec), "--out", str(tmp_path / "again"), "--seed", "1"]) == 0
    assert (tmp_path / "again").read_bytes() == dataset.read_bytes()


def test_usage_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"T": 7}))
    assert main(["gen", "--spec", str(bad), "--out", str(tmp_path / "x")]) == 2
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["gen", "--spec", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    assert main(["config", "--train.epochs", "many"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    assert "error" in capsys.readouterr().err


def test_train_writes_identical_artifacts(tmp_path, dataset, trained):
    again = tmp_path / "again"
    assert main(["train", "--data", str(dataset), "--out", str(again), "--seed", "0", *FAST]) == 0
    for name in ("metrics.csv", "model.wdcc"):
        assert (again / name).read_bytes() == (trained / name).read_bytes()
    header = (trained / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,step,loss_total,loss_fuse,loss_salient,loss_proto,acc_fuse"


def test_eval_reports_and_rejects_mismatch(tmp_path, dataset, trained, capsys):
    ckpt = str(trained / "model.wdcc")
    assert main(["eval", "--ckpt", ckpt, "--data", str(dataset), "--split", "all"]) == 0
    out = capsys.readouterr().out
    assert "samples 36" in out and "within-pair confusion rate" in out and "class 5:" in out
    assert main(["eval", "--ckpt", ckpt, "--data", str(dataset)]) == 0
    assert "samples 6 (test split)" in capsys.readouterr().out
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"lr": 0.5}}))
    assert main(["eval", "--ckpt", ckpt, "--data", str(dataset), "--config", str(cfg)]) == 2
    assert "mismatch" in capsys.readouterr().err
    other = tmp_path / "other"
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({**SPEC, "T": 16}))
    main(["gen", "--spec", str(spec), "--out", str(other)])
    assert main(["eval", "--ckpt", ckpt, "--data", str(other)]) == 2


def test_dump_shapes(tmp_path, dataset, trained):
    out = tmp_path / "dump"
    assert main(["dump", "--ckpt", str(trained / "model.wdcc"), "--data", str(dataset), "--out", str(out)]) == 0
    assert load_tensor(out / "att.wdct").shape == (36, 8, 5)
    for name in ("fused", "salient", "subtle"):
        assert load_tensor(out / f"{name}.wdct").shape == (36, 8)
    assert load_tensor(out / "logits.wdct").shape == (36, 6)
    assert len((out / "samples.csv").read_text().splitlines()) == 37


def test_ablate_rows_and_determinism(tmp_path, dataset):
    args = ["ablate", "--data", str(dataset), "--seeds", "0,1", *FAST, "--train.epochs", "1"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    csv = (tmp_path / "a" / "ablation.csv").read_text().splitlines()
    assert len(csv) == 1 + 7 * 2
    assert csv == (tmp_path / "b" / "ablation.csv").read_text().splitlines()
    assert len((tmp_path / "a" / "ranking.txt").read_text().splitlines()) == 8
    assert main(["ablate", "--data", str(dataset), "--out", str(tmp_path / "c"), "--rows", "bogus"]) == 2


def test_dwt_constant_and_round_trip(tmp_path, np_rng):
    ids, labels = np.array([0, 1]), np.array([0, 1])
    const = np.full((2, 3, 8, 3), 2.5)
    write_trajectories(tmp_path / "c.csv", ids, labels, const)
    assert main(["dwt", "--in", str(tmp_path / "c.csv"), "--out", str(tmp_path / "cb")]) == 0
    rows = [line.split(",") for line in (tmp_path / "cb" / "high.csv").read_text().splitlines()[1:]]
    assert len(rows) == 2 * 3 * 4 and all(float(v) == 0.0 for r in rows for v in r[4:])

    x = np_rng.normal(size=(2, 3, 8, 3))
    write_trajectories(tmp_path / "x.csv", ids, labels, x)
    assert main(["dwt", "--in", str(tmp_path / "x.csv"), "--out", str(tmp_path / "xb")]) == 0
    assert main(["dwt", "--inverse", "--in", str(tmp_path / "xb"), "--out", str(tmp_path / "back.csv")]) == 0
    vals = np.array([[float(v) for v in line.split(",")[4:]] for line in (tmp_path / "back.csv").read_text().splitlines()[1:]])
    assert np.abs(vals - x.reshape(-1, 3)).max() < 1e-12


def test_dwt_malformed_csv_names_line(tmp_path, capsys):
    p = tmp_path / "m.csv"
    p.write_text("sample_id,label,joint,frame,x,y,z\n0,0,0,0,1,2,3\n0,0,0,1,1,2\n")
    assert main(["dwt", "--in", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_verify_wavelet_suite(capsys):
    assert main(["verify", "--suite", "wavelet"]) == 0
    out = capsys.readouterr().out
    assert "properties passed" in out and "reconstruction" in out
