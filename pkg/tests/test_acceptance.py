"""Acceptance criteria, one test each.  Every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from wdce import verify
from wdce.ablation import mean_test, run_ablation
from wdce.attention import decoupling_attention, init_decoupling, init_trajectory, trajectory_attention
from wdce.backbone import BackboneConfig
from wdce.cli import main
from wdce.config import resolve
from wdce.contrastive import ContrastiveConfig, PrototypeBank, prototype_loss, update_prototypes
from wdce.data import SynthSpec, discriminability, generate, split
from wdce.model import TrainConfig, WdceModel
from wdce.rng import Rng
from wdce.training import fit
from wdce.wavelet import build_haar, dwt, idwt

ROOT = Path(__file__).resolve().parents[1]
DESK = ROOT / "configs" / "desk.json"
T_SWEEP = (2, 4, 8, 16, 32, 64)


@pytest.fixture
def report(capsys):
    def _report(n, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {title} [{detail}]")
        assert ok, detail
    return _report


def test_criterion_1_haar_reconstruction_and_parseval(report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    rec = pars = 0.0
    for T in T_SWEEP:
        f = build_haar(T)
        x = rng.normal(size=(100, T))
        lo, hi = dwt(x, f)
        rec = max(rec, np.abs(idwt(lo, hi, f).data - x).max())
        e = (x**2).sum(axis=1)
        pars = max(pars, (np.abs(e - (lo.data**2).sum(axis=1) - (hi.data**2).sum(axis=1)) / e).max())
    elapsed = time.perf_counter() - start
    ok = rec < 1e-10 and pars < 1e-10 and elapsed < 5
    report(1, "Haar reconstruction and Parseval", ok, f"recon {rec:.2e}, parseval rel {pars:.2e}, {elapsed:.2f}s")


def test_criterion_2_filter_algebra(report):
    worst = 0.0
    for T in T_SWEEP:
        f = build_haar(T)
        L, H, h = f.low, f.high, T // 2
        for got, want in ((L.T @ L, np.eye(h)), (H.T @ H, np.eye(h)), (L.T @ H, np.zeros((h, h))), (L @ L.T + H @ H.T, np.eye(T))):
            worst = max(worst, np.abs(got - want).max())
    report(2, "filter algebra", worst < 1e-12, f"max abs deviation {worst:.2e}")


def test_criterion_3_gradient_fidelity(report):
    start = time.perf_counter()
    checks = verify.grad_suite()
    elapsed = time.perf_counter() - start
    worst = max(c.value for c in checks)
    layers = {c.name for c in checks}
    covered = {f"layer.{n}" for n in ("dwt", "idwt", "st_gc_layer", "ssa_tformer_layer", "decoupling_attention",
                                       "trajectory_attention", "prototype_loss")} | {"full_loss"}
    ok = all(c.passed for c in checks) and worst < 1e-5 and covered <= layers and elapsed < 60
    assert verify.GRAD_STEP == 1e-6 and verify.MICRO == dict(N=2, C=8, T=8, V=5, K=3)
    report(3, "gradient fidelity", ok, f"{len(checks)} probes, max rel error {worst:.2e}, {elapsed:.1f}s")


def test_criterion_4_attention_contracts(report):
    rng = np.random.default_rng(4)
    n, c, t, v = 3, 6, 8, 5
    row_dev, w_ok = 0.0, True
    for i in range(20):
        x = rng.normal(size=(n, c, t // 2, v)) * 3
        _, att = trajectory_attention(x, init_trajectory(Rng(i), c, v))
        row_dev = max(row_dev, np.abs(att.data.sum(axis=-1) - 1).max())
        e = rng.normal(size=(n, c, t, v))
        lo, hi = rng.normal(size=(2, n, c * v, t // 2))
        _, _, w = decoupling_attention(e, lo, hi, init_decoupling(Rng(i), c, t))
        w_ok &= bool(np.all((w.data > 0) & (w.data < 1)))
    zero_da = {k: p.data * 0 for k, p in init_decoupling(Rng(0), c, t).items()}
    _, _, w0 = decoupling_attention(rng.normal(size=(n, c, t, v)), lo, hi, zero_da)
    zero_ta = {k: p.data * 0 for k, p in init_trajectory(Rng(0), c, v).items()}
    x = rng.normal(size=(n, c, t // 2, v))
    enh, att0 = trajectory_attention(x, zero_ta)
    exact = bool(np.all(w0.data == 0.5) and np.all(att0.data == 1 / v) and np.array_equal(enh.data, x * (1 / v)))
    ok = row_dev <= 1e-10 and w_ok and exact
    report(4, "attention contracts", ok, f"row-sum dev {row_dev:.1e}, weights in (0,1) {w_ok}, zero-param exact {exact}")


def test_criterion_5_contrastive_analytics(report):
    protos = np.array([[1.0, 0.0], [0.0, 1.0]])
    bank = PrototypeBank(2, 2, 2, 0.9, protos.copy(), protos.copy(), np.ones(2, bool), np.ones(2, bool))
    cfg = ContrastiveConfig(alpha=1.0, beta=0.0, tau=0.1)
    eq = prototype_loss(bank, np.array([[1.0, 1.0]]), None, [0], cfg).item()
    sep = prototype_loss(bank, np.array([[1.0, 0.0]]), None, [0], cfg).item()
    d_eq, d_sep = abs(eq - math.log(2)), abs(sep - math.log1p(math.exp(-10)))
    rng = np.random.default_rng(5)
    excess = -np.inf
    for _ in range(20):
        p0, target = rng.normal(size=(2, 1, 4))
        b = PrototypeBank(1, 4, 1, 0.9)
        update_prototypes(b, p0, None, [0], [True])
        for _ in range(100):
            update_prototypes(b, target, None, [0], [True])
        excess = max(excess, np.linalg.norm(b.feat[0] - target[0]) - (0.9**100 * np.linalg.norm(p0 - target) + 1e-12))
    ok = d_eq <= 1e-9 and d_sep <= 1e-9 and excess < 0
    report(5, "contrastive analytics", ok, f"|ln2 dev| {d_eq:.1e}, |closed-form dev| {d_sep:.1e}, EMA bound slack {-excess:.1e}")


@pytest.mark.slow
def test_criterion_6_ablation_trend(report):
    start = time.perf_counter()
    cfg = resolve(DESK, {}, {})
    ds = generate(SynthSpec())
    train, test = split(ds, cfg.run.train_fraction, cfg.run.split_seed)
    runs = run_ablation(train, test, cfg.train, cfg.backbone, seeds=[0, 1, 2])
    elapsed = time.perf_counter() - start
    full, base = mean_test(runs, "full"), mean_test(runs, "baseline")
    dwt_da, split_da = mean_test(runs, "dwt+da"), mean_test(runs, "split+da")
    ok = len(runs) == 21 and full >= base + 0.05 and dwt_da > split_da and elapsed < 900
    report(6, "ablation trend", ok,
           f"full {100 * full:.1f}% vs baseline {100 * base:.1f}%, dwt+da {100 * dwt_da:.1f}% vs split+da {100 * split_da:.1f}%, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_7_training_sanity(report):
    ds = generate(SynthSpec(rho=0.5, sigma=0.01))
    cfg = TrainConfig()
    model = WdceModel(ds.n_classes, ds.T, ds.V, 3, cfg, BackboneConfig())
    rows, _ = fit(model, ds.model_input(), ds.labels, max_steps=200)
    acc = float((model.predict_logits(ds.model_input()).argmax(axis=1) == ds.labels).mean())
    loss = np.array([r["loss_total"] for r in rows])
    ma = np.convolve(loss, np.ones(10) / 10, mode="valid")
    first = next(i for i, r in enumerate(rows) if r["epoch"] >= cfg.milestone_epochs()[0])
    worst = float(np.diff(ma[first:]).max())
    ok = len(rows) <= 200 and acc >= 0.95 and worst <= 0.0
    report(7, "training sanity", ok, f"train acc {100 * acc:.1f}% in {len(rows)} steps, largest MA step after milestone {worst:.2e}")


def test_criterion_8_cli_determinism(report, tmp_path):
    fast = ["--backbone.n_stgc", "1", "--backbone.n_ssa", "1", "--backbone.channels", "8", "--backbone.tcn_kernel", "3",
            "--train.epochs", "2", "--train.batch_size", "16"]
    spec = tmp_path / "spec.json"
    spec.write_text('{"samples_per_class": 8, "T": 16}')
    for run in ("a", "b"):
        d = tmp_path / run
        data = d / "data.wdcc"
        assert main(["gen", "--spec", str(spec), "--seed", "3", "--out", str(data)]) == 0
        assert main(["train", "--data", str(data), "--out", str(d / "train"), "--seed", "3", *fast]) == 0
        assert main(["ablate", "--data", str(data), "--out", str(d / "ablate"), "--seeds", "0,1", "--rows", "baseline,full", *fast]) == 0
        assert main(["dump", "--ckpt", str(d / "train" / "model.wdcc"), "--data", str(data), "--out", str(d / "dump")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    key = {"train/metrics.csv", "train/model.wdcc"} <= {str(f) for f in files}
    report(8, "CLI determinism", same and key, f"{len(files)} artifacts compared byte for byte")


def test_criterion_9_generator_discriminability(report):
    ratios = discriminability(generate(SynthSpec()))
    report(9, "generator discriminability", ratios.min() >= 5, "per-pair ratios " + ", ".join(f"{r:.2f}" for r in ratios))
