"""SGD with momentum, step decay, and the training loop."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .contrastive import update_prototypes
from .model import WdceModel
from .rng import Rng

METRIC_COLUMNS = ("epoch", "step", "loss_total", "loss_fuse", "loss_salient", "loss_proto", "acc_fuse")


class TrainingError(FloatingPointError):
    pass


class SGD:
    """Heavy-ball SGD; weight decay enters as an L2 term on the gradient.

    With ``clip_norm > 0`` the raw gradients are rescaled so their global L2
    norm is at most ``clip_norm`` before decay and momentum are applied.
    """

    def __init__(self, params: dict, momentum: float = 0.9, weight_decay: float = 0.0, buffers: dict | None = None, clip_norm: float = 0.0):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.buffers: dict[str, np.ndarray] = {k: np.array(v) for k, v in (buffers or {}).items()}
        self.last_grad_norm = 0.0

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((p.grad**2).sum()) for p in self.params.values() if p.grad is not None)))

    def step(self, lr: float) -> None:
        norm = self.last_grad_norm = self.grad_norm()
        scale = self.clip_norm / norm if self.clip_norm and norm > self.clip_norm else 1.0
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad * scale if scale != 1.0 else p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            buf = self.buffers.get(name)
            buf = g.copy() if buf is None else self.momentum * buf + g
            self.buffers[name] = buf
            if lr:
                p.data = p.data - lr * buf


@dataclass
class StepMetrics:
    loss_total: float
    loss_fuse: float
    loss_salient: float
    loss_proto: float
    acc_fuse: float


def train_step(model: WdceModel, xb, yb, opt: SGD, lr: float) -> StepMetrics:
    yb = np.asarray(yb, dtype=np.int64)
    model.zero_grad()
    out = model.forward(xb)
    parts = model.loss(out, yb)
    for name in ("fuse", "salient", "proto"):
        value = getattr(parts, name)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss term {name}={value}")
    total = parts.total.item()
    if not math.isfinite(total):
        raise TrainingError(f"non-finite total loss {total}")
    parts.total.backward()
    opt.step(lr)

    correct = out.logits_fuse.data.argmax(axis=1) == yb
    if model.bank is not None:
        att = None if out.att is None else out.att.data
        update_prototypes(model.bank, out.subtle_pooled.data, att, yb, correct)
    return StepMetrics(total, parts.fuse, parts.salient, parts.proto, float(correct.mean()))


def iter_batches(n: int, batch_size: int, rng: Rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def fit(model: WdceModel, X, y, max_steps: int | None = None, opt: SGD | None = None) -> tuple[list[dict], SGD]:
    """Run the configured epoch budget; returns one metrics row per step."""
    cfg = model.train
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    opt = opt or SGD(model.params, cfg.momentum, cfg.weight_decay, clip_norm=cfg.clip_norm)
    rows: list[dict] = []
    data_rng = Rng(cfg.seed).split("batches")
    step = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order_rng = data_rng.split(epoch) if cfg.shuffle == "epoch" else data_rng.split("once")
        for idx in iter_batches(len(X), cfg.batch_size, order_rng):
            m = train_step(model, X[idx], y[idx], opt, lr)
            rows.append({"epoch": epoch, "step": step, **vars(m)})
            step += 1
            if max_steps is not None and step >= max_steps:
                return rows, opt
    return rows, opt


def metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([r["epoch"], r["step"]] + [repr(float(r[c])) for c in METRIC_COLUMNS[2:]])
    return buf.getvalue()
