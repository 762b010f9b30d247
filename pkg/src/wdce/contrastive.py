"""Class prototypes and the prototype contrastive loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .tensor import Tensor


NORM_EPS = 1e-12


class PrototypeError(ValueError):
    pass


@dataclass
class ContrastiveConfig:
    alpha: float = 0.9
    beta: float = 0.1
    tau: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"alpha and beta must be nonnegative, got {self.alpha}, {self.beta}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass
class PrototypeBank:
    """Running per-class feature and attention prototypes."""

    K: int
    d_feat: int
    d_att: int
    momentum: float = 0.9
    feat: np.ndarray = field(default=None, repr=False)
    att: np.ndarray = field(default=None, repr=False)
    initialized: np.ndarray = field(default=None)
    att_initialized: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0 < self.momentum < 1:
            raise ValueError(f"momentum must lie in (0, 1), got {self.momentum}")
        if self.feat is None:
            self.feat = np.zeros((self.K, self.d_feat))
        if self.att is None:
            self.att = np.zeros((self.K, self.d_att))
        if self.initialized is None:
            self.initialized = np.zeros(self.K, dtype=bool)
        if self.att_initialized is None:
            self.att_initialized = np.zeros(self.K, dtype=bool)

    @property
    def ready(self) -> bool:
        return bool(self.initialized.all())

    @property
    def att_ready(self) -> bool:
        return bool(self.att_initialized.all())

    def copy(self) -> "PrototypeBank":
        return PrototypeBank(
            self.K, self.d_feat, self.d_att, self.momentum,
            self.feat.copy(), self.att.copy(), self.initialized.copy(), self.att_initialized.copy(),
        )

    def header(self) -> dict:
        return {
            "K": self.K,
            "D_feat": self.d_feat,
            "D_att": self.d_att,
            "m": self.momentum,
            "initialized": self.initialized.astype(int).tolist(),
            "att_initialized": self.att_initialized.astype(int).tolist(),
        }

    @classmethod
    def from_header(cls, header: dict, feat: np.ndarray, att: np.ndarray) -> "PrototypeBank":
        return cls(
            int(header["K"]), int(header["D_feat"]), int(header["D_att"]), float(header["m"]),
            np.array(feat, dtype=np.float64), np.array(att, dtype=np.float64),
            np.array(header["initialized"], dtype=bool), np.array(header["att_initialized"], dtype=bool),
        )


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise PrototypeError("cosine similarity of a zero-norm vector (uninitialized prototype?)")
    return float(a @ b / (na * nb))


def _ema(protos: np.ndarray, flags: np.ndarray, vectors: np.ndarray, labels, mask, m: float) -> None:
    for k in np.unique(labels[mask]):
        v = vectors[mask & (labels == k)].mean(axis=0)
        if flags[k]:
            protos[k] = m * protos[k] + (1.0 - m) * v
        else:
            protos[k] = v
            flags[k] = True


def update_prototypes(bank: PrototypeBank, subtle_feats, att_maps, labels, correct_mask) -> PrototypeBank:
    """EMA update from correctly classified samples; modifies ``bank`` in place.

    ``att_maps`` may be ``None`` when the model has no trajectory attention.
    """
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(correct_mask, dtype=bool)
    feats = np.asarray(subtle_feats, dtype=np.float64)
    if labels.shape != mask.shape or feats.shape[0] != labels.shape[0]:
        raise ValueError(f"batch misaligned: labels {labels.shape}, mask {mask.shape}, feats {feats.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= bank.K):
        raise PrototypeError(f"label out of range [0, {bank.K}): {labels.min()}..{labels.max()}")
    _ema(bank.feat, bank.initialized, feats.reshape(len(labels), -1), labels, mask, bank.momentum)
    if att_maps is not None:
        att = np.asarray(att_maps, dtype=np.float64).reshape(len(labels), -1)
        _ema(bank.att, bank.att_initialized, att, labels, mask, bank.momentum)
    return bank


def _prototype_ce(x: Tensor, protos: np.ndarray, labels: np.ndarray, tau: float) -> Tensor:
    """Per-sample ``-log softmax(cos(x, P) / tau)[label]``, prototypes constant."""
    norms = np.linalg.norm(protos, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise PrototypeError("zero-norm prototype leaked into the loss")
    # a dead (all-zero) sample vector gets similarity 0 to every prototype
    xn = tn.l2norm(x, axis=1, keepdims=True, eps=NORM_EPS)
    sims = tn.matmul(x / xn, (protos / norms).T)  # N K
    logp = tn.log_softmax(sims * (1.0 / tau), axis=1)
    onehot = np.zeros(logp.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -tn.sum(logp * onehot, axis=1)


def prototype_loss(bank: PrototypeBank, subtle_feats, att_maps, labels, cfg: ContrastiveConfig, strict: bool = False) -> Tensor:
    """Mean over the batch of ``alpha * feature term + beta * attention term``.

    The loss is zero until every prototype it reads is initialized
    (``strict`` raises instead).  Pass ``att_maps=None`` to drop the
    attention term.
    """
    if not cfg.tau > 0:
        raise ValueError(f"tau must be positive, got {cfg.tau}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= bank.K):
        raise PrototypeError(f"label out of range [0, {bank.K}): {labels.min()}..{labels.max()}")
    feats = tn.as_tensor(subtle_feats)
    n = len(labels)
    total = tn.Tensor(0.0)
    use_att = att_maps is not None and cfg.beta > 0
    ready = bank.ready and (bank.att_ready or not use_att)
    if not ready:
        if strict:
            raise PrototypeError("prototype bank not fully initialized")
        return total
    if cfg.alpha > 0:
        term = _prototype_ce(tn.reshape(feats, (n, -1)), bank.feat, labels, cfg.tau)
        total = total + tn.mean(term) * cfg.alpha
    if use_att:
        att = tn.reshape(tn.as_tensor(att_maps), (n, -1))
        term = _prototype_ce(att, bank.att, labels, cfg.tau)
        total = total + tn.mean(term) * cfg.beta
    return total
