"""Synthetic confusable-action skeletons, dataset containers and file I/O.

Classes come in pairs.  Both classes of a pair share the same low-frequency
"salient" motion; per sample that motion gets a random time shift and
amplitude, drawn identically for the two classes.  What separates the pair
is a weak near-Nyquist "subtle" component whose phase differs between the
two classes.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .io import FormatError, read_container, write_container
from .rng import Rng
from .wavelet import build_haar, dwt


@dataclass
class SynthSpec:
    k_pairs: int = 3
    V: int = 7
    T: int = 32
    f_split: float = 0.4
    salient_freqs: tuple[float, float] = (0.03, 0.15)
    n_salient: int = 2
    salient_amp: float = 1.0
    subtle_freqs: tuple[float, float] = (0.47, 0.49)
    subtle_phase_offset: float = float(np.pi)
    rho: float = 0.15
    sigma: float = 0.05
    samples_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        self.salient_freqs = tuple(float(f) for f in self.salient_freqs)
        self.subtle_freqs = tuple(float(f) for f in self.subtle_freqs)
        if self.T < 2 or self.T % 2:
            raise ValueError(f"T must be even and >= 2, got {self.T}")
        if self.k_pairs < 1 or self.V < 1 or self.samples_per_class < 1 or self.n_salient < 1:
            raise ValueError("k_pairs, V, n_salient and samples_per_class must be positive")
        if not 0 < self.f_split < 0.5:
            raise ValueError(f"f_split must lie in (0, 0.5) cycles/frame, got {self.f_split}")
        lo, hi = self.salient_freqs
        if not 0 <= lo <= hi < self.f_split:
            raise ValueError(f"salient frequencies {self.salient_freqs} must lie below f_split={self.f_split}")
        lo, hi = self.subtle_freqs
        if not self.f_split <= lo <= hi <= 0.5:
            raise ValueError(f"subtle frequencies {self.subtle_freqs} must lie in [f_split, 0.5]")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def n_classes(self) -> int:
        return 2 * self.k_pairs

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class Dataset:
    """Samples stored as ``joints`` ``(N, V, T, 3)`` with labels and ids."""

    joints: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray
    n_classes: int = field(default=0)

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.joints.ndim != 4 or len(self.joints) != len(self.labels) or len(self.labels) != len(self.sample_ids):
            raise ValueError(f"inconsistent dataset: joints {self.joints.shape}, {len(self.labels)} labels")
        if self.joints.shape[2] % 2:
            raise ValueError(f"T must be even, got {self.joints.shape[2]}")
        if not self.n_classes:
            self.n_classes = int(self.labels.max()) + 1 if len(self.labels) else 0

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Dataset)
            and self.joints.shape == other.joints.shape
            and np.array_equal(self.joints, other.joints)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.sample_ids, other.sample_ids)
        )

    @property
    def V(self) -> int:
        return self.joints.shape[1]

    @property
    def T(self) -> int:
        return self.joints.shape[2]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.joints[idx], self.labels[idx], self.sample_ids[idx], self.n_classes)

    def model_input(self, joints: np.ndarray | None = None) -> np.ndarray:
        """``(N, V, T, C)`` joints to the model layout ``(N, C, T, V)``."""
        j = self.joints if joints is None else joints
        return np.ascontiguousarray(j.transpose(0, 3, 2, 1))

    def class_counts(self) -> dict[int, int]:
        return {int(k): int((self.labels == k).sum()) for k in range(self.n_classes)}


def _pair_bank(spec: SynthSpec, pair: int) -> dict:
    rng = Rng(spec.seed).split("pair", pair)
    lo, hi = spec.salient_freqs
    freqs = rng.split("salient_freqs").uniform(spec.n_salient, lo, hi)
    phases = rng.split("salient_phases").uniform((spec.V, 3, spec.n_salient), 0, 2 * np.pi)
    amps = spec.salient_amp * rng.split("salient_amps").uniform((spec.V, 3, spec.n_salient), 0.5, 1.0)
    lo, hi = spec.subtle_freqs
    f_sub = lo if spec.k_pairs == 1 else lo + (hi - lo) * pair / (spec.k_pairs - 1)
    # one phase per coordinate, shared by all joints: a coherent whole-body tremor
    sub_phase = np.broadcast_to(rng.split("subtle_phases").uniform(3, 0, 2 * np.pi), (spec.V, 3))
    return {"freqs": freqs, "phases": phases, "amps": amps, "f_sub": f_sub, "sub_phase": sub_phase}


def salient_signal(spec: SynthSpec, bank: dict, pair: int, index: int) -> np.ndarray:
    """Shared low-band motion ``(V, T, 3)`` for sample ``index`` of either class of ``pair``."""
    rng = Rng(spec.seed).split("jitter", pair, index)
    shift = rng.uniform((), 0, spec.T)
    scale = rng.uniform((), 0.8, 1.2)
    t = np.arange(spec.T) + shift
    arg = 2 * np.pi * bank["freqs"][None, None, :, None] * t + bank["phases"][..., None]  # V 3 S T
    sig = scale * (bank["amps"][..., None] * np.sin(arg)).sum(axis=2)
    return sig.transpose(0, 2, 1)


def subtle_signal(spec: SynthSpec, bank: dict, side: int) -> np.ndarray:
    t = np.arange(spec.T)
    phase = bank["sub_phase"] + side * spec.subtle_phase_offset
    amp = spec.rho * spec.salient_amp
    sig = amp * np.sin(2 * np.pi * bank["f_sub"] * t[None, None, :] + phase[..., None])  # V 3 T
    return sig.transpose(0, 2, 1)


def generate(spec: SynthSpec) -> Dataset:
    n_per = spec.samples_per_class
    joints = np.empty((spec.n_classes * n_per, spec.V, spec.T, 3))
    labels = np.repeat(np.arange(spec.n_classes), n_per)
    for pair in range(spec.k_pairs):
        bank = _pair_bank(spec, pair)
        subtle = [subtle_signal(spec, bank, side) for side in (0, 1)]
        for j in range(n_per):
            salient = salient_signal(spec, bank, pair, j)
            for side in (0, 1):
                sid = (2 * pair + side) * n_per + j
                noise = Rng(spec.seed).split("noise", sid).normal((spec.V, spec.T, 3), 0, spec.sigma) if spec.sigma else 0.0
                joints[sid] = salient + subtle[side] + noise
    return Dataset(joints, labels, np.arange(len(labels)), spec.n_classes)


def band_features(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Haar low/high bands of every trajectory: two ``(N, V*3, T/2)`` arrays."""
    n, v, t, c = dataset.joints.shape
    rows = dataset.joints.transpose(0, 1, 3, 2).reshape(n, v * c, t)
    low, high = dwt(rows, build_haar(t))
    return low.data, high.data


def discriminability(dataset: Dataset) -> np.ndarray:
    """High-band over low-band distance between class means, per class pair ``(2p, 2p+1)``."""
    low, high = band_features(dataset)
    ratios = []
    for p in range(dataset.n_classes // 2):
        a, b = dataset.labels == 2 * p, dataset.labels == 2 * p + 1
        d_low = np.linalg.norm(low[a].mean(axis=0) - low[b].mean(axis=0))
        d_high = np.linalg.norm(high[a].mean(axis=0) - high[b].mean(axis=0))
        ratios.append(1.0 if d_low == 0 and d_high == 0 else d_high / d_low if d_low else np.inf)
    return np.array(ratios)


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified, seeded train/test split."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = Rng(seed).split("split")
    train_idx, test_idx = [], []
    for k in np.unique(dataset.labels):
        members = np.flatnonzero(dataset.labels == k)
        if len(members) < 2:
            raise ValueError(f"class {k} has {len(members)} sample(s); a split needs at least 2")
        order = members[rng.split(int(k)).permutation(len(members))]
        n_train = min(max(int(round(train_fraction * len(members))), 1), len(members) - 1)
        train_idx.extend(order[:n_train])
        test_idx.extend(order[n_train:])
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))


def save(dataset: Dataset, path) -> None:
    n, v, t, c = dataset.joints.shape if len(dataset) else (0, *dataset.joints.shape[1:])
    meta = {"kind": "wdce-dataset", "V": v, "T": t, "C": c, "n": n, "n_classes": dataset.n_classes}
    entries = [(f"{sid},{lab}", j) for sid, lab, j in zip(dataset.sample_ids, dataset.labels, dataset.joints)]
    write_container(path, meta, entries)


def load(path) -> Dataset:
    meta, entries = read_container(path)
    if meta.get("kind") != "wdce-dataset":
        raise FormatError(f"{path}: not a dataset container (kind={meta.get('kind')!r})")
    shape = (meta["V"], meta["T"], meta["C"])
    if len(entries) != meta["n"]:
        raise FormatError(f"{path}: manifest declares {meta['n']} records, found {len(entries)}")
    ids, labels, joints = [], [], np.empty((len(entries), *shape))
    for i, (name, arr) in enumerate(entries):
        try:
            sid, lab = (int(s) for s in name.split(","))
        except ValueError:
            raise FormatError(f"{path}: malformed manifest entry {i}: {name!r}") from None
        if arr.shape != shape:
            raise FormatError(f"{path}: record {i} has shape {arr.shape}, expected {shape}")
        ids.append(sid)
        labels.append(lab)
        joints[i] = arr
    return Dataset(joints, np.array(labels, dtype=np.int64), np.array(ids, dtype=np.int64), meta["n_classes"])


CSV_COLUMNS = ("sample_id", "label", "joint", "frame", "x", "y", "z")


def read_csv(path) -> Dataset:
    """Import trajectories from long-format CSV (one row per sample/joint/frame)."""
    sids, labels, joints = read_trajectories(path)
    if joints.shape[2] % 2:
        raise FormatError(f"{path}: frame count {joints.shape[2]} is odd; trajectories need an even length")
    return Dataset(joints, labels, sids)


def read_trajectories(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a long-format CSV into ``(sample_ids, labels, joints (N, V, T, 3))``."""
    records: dict[int, tuple[int, dict]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise FormatError(f"{path}: line 1: expected header {','.join(CSV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise FormatError(f"{path}: line {lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                sid, lab, joint, frame = (int(v) for v in row[:4])
                xyz = tuple(float(v) for v in row[4:])
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: non-numeric field") from None
            if not all(np.isfinite(xyz)):
                raise FormatError(f"{path}: line {lineno}: non-finite coordinate")
            if min(sid, lab, joint, frame) < 0:
                raise FormatError(f"{path}: line {lineno}: negative id, label, joint or frame")
            prev = records.setdefault(sid, (lab, {}))
            if prev[0] != lab:
                raise FormatError(f"{path}: line {lineno}: sample {sid} has conflicting labels")
            if (joint, frame) in prev[1]:
                raise FormatError(f"{path}: line {lineno}: duplicate point joint={joint} frame={frame} for sample {sid}")
            prev[1][(joint, frame)] = xyz
    if not records:
        raise FormatError(f"{path}: no data rows")
    V = 1 + max(j for _, pts in records.values() for j, _ in pts)
    T = 1 + max(t for _, pts in records.values() for _, t in pts)
    joints = np.empty((len(records), V, T, 3))
    sids = sorted(records)
    for i, sid in enumerate(sids):
        lab, pts = records[sid]
        if len(pts) != V * T:
            raise FormatError(f"{path}: sample {sid} has {len(pts)} points, expected {V}x{T}")
        for (j, t), xyz in pts.items():
            joints[i, j, t] = xyz
    labels = np.array([records[s][0] for s in sids], dtype=np.int64)
    return np.array(sids, dtype=np.int64), labels, joints


def write_csv(dataset: Dataset, path) -> None:
    write_trajectories(path, dataset.sample_ids, dataset.labels, dataset.joints)


def write_trajectories(path, sample_ids, labels, joints) -> None:
    """Long-format CSV with :data:`CSV_COLUMNS`; floats are written round-trip exact."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for sid, lab, j in zip(sample_ids, labels, joints):
            for joint in range(j.shape[0]):
                for frame in range(j.shape[1]):
                    w.writerow([int(sid), int(lab), joint, frame, *(repr(float(v)) for v in j[joint, frame])])
