"""Ablation sweep over the component switches, with a ranking summary."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .backbone import BackboneConfig, default_edges
from .data import Dataset
from .model import ABLATIONS, TrainConfig, WdceModel
from .training import fit


@dataclass(frozen=True)
class AblationRun:
    row: str
    seed: int
    train_acc: float
    test_acc: float
    steps: int


def accuracy(model: WdceModel, ds: Dataset) -> float:
    pred = model.predict_logits(ds.model_input()).argmax(axis=1)
    return float((pred == ds.labels).mean())


def run_row(row: str, seed: int, train: Dataset, test: Dataset, base: TrainConfig, backbone: BackboneConfig) -> AblationRun:
    cfg = replace(base, seed=seed, **ABLATIONS[row])
    model = WdceModel(train.n_classes, train.T, train.V, train.joints.shape[3], cfg, backbone, default_edges(train.V))
    rows, _ = fit(model, train.model_input(), train.labels)
    return AblationRun(row, seed, accuracy(model, train), accuracy(model, test), len(rows))


def run_ablation(train: Dataset, test: Dataset, base: TrainConfig, backbone: BackboneConfig, seeds, rows=None, log=None) -> list[AblationRun]:
    runs = []
    for row in rows or list(ABLATIONS):
        if row not in ABLATIONS:
            raise ValueError(f"unknown ablation row {row!r}; choose from {list(ABLATIONS)}")
        for seed in seeds:
            run = run_row(row, int(seed), train, test, base, backbone)
            if log is not None:
                log(f"{row:12s} seed={seed} train={run.train_acc:.4f} test={run.test_acc:.4f}")
            runs.append(run)
    return runs


def summarize(runs: list[AblationRun]) -> list[tuple[str, float, float, int]]:
    """``(row, mean test acc, std, n)`` sorted best first; ties keep row order."""
    order = list(dict.fromkeys(r.row for r in runs))
    stats = []
    for row in order:
        acc = np.array([r.test_acc for r in runs if r.row == row])
        stats.append((row, float(acc.mean()), float(acc.std()), len(acc)))
    return sorted(stats, key=lambda s: -s[1])


def mean_test(runs: list[AblationRun], row: str) -> float:
    acc = [r.test_acc for r in runs if r.row == row]
    if not acc:
        raise KeyError(row)
    return float(np.mean(acc))


def runs_csv(runs: list[AblationRun]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "seed", "train_acc", "test_acc", "steps"])
    for r in runs:
        w.writerow([r.row, r.seed, repr(r.train_acc), repr(r.test_acc), r.steps])
    return buf.getvalue()


def ranking_table(runs: list[AblationRun]) -> str:
    lines = [f"{'rank':>4}  {'row':12s} {'mean':>7} {'std':>7}  n"]
    for i, (row, mean, std, n) in enumerate(summarize(runs), start=1):
        lines.append(f"{i:>4}  {row:12s} {100 * mean:6.2f}% {100 * std:6.2f}  {n}")
    return "\n".join(lines) + "\n"
