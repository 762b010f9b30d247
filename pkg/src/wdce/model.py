"""WDCE-Net assembly: backbone, wavelet decoupling, trajectory attention, fusion heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as tn
from .attention import decoupling_attention, grid_to_band, band_to_grid, init_decoupling, init_trajectory, trajectory_attention
from .backbone import DEFAULT_EDGES, BackboneConfig, SkeletonGraph, build_graph, extract, init_backbone, uniform_param, zeros_param
from .contrastive import ContrastiveConfig, PrototypeBank, prototype_loss
from .io import read_container, write_container
from .rng import Rng
from .tensor import ShapeError, Tensor
from .wavelet import build_haar, dwt


# "once": one seeded order reused every epoch; "epoch": a fresh order per epoch
SHUFFLE_MODES = ("once", "epoch")


@dataclass
class TrainConfig:
    lambda_fuse: float = 0.4
    lambda_salient: float = 0.2
    lambda_proto: float = 0.4
    alpha: float = 0.9
    beta: float = 0.1
    tau: float = 0.1
    proto_momentum: float = 0.9
    d_att: int = 8
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0004
    clip_norm: float = 1.0
    milestones: tuple[float, ...] = (0.6, 0.8)
    gamma: float = 0.1
    epochs: int = 25
    batch_size: int = 64
    shuffle: str = "once"
    seed: int = 0
    use_dwt: bool = True
    use_da: bool = True
    use_ta: bool = True
    use_pcl: bool = True
    use_channel_split: bool = False

    def __post_init__(self):
        self.milestones = tuple(float(m) for m in self.milestones)
        for name in ("lambda_fuse", "lambda_salient", "lambda_proto", "lr", "weight_decay", "clip_norm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.use_dwt and self.use_channel_split:
            raise ValueError("use_channel_split replaces the DWT; it cannot be combined with use_dwt")
        if not self.decoupled and (self.use_da or self.use_ta or self.use_pcl):
            raise ValueError("use_da, use_ta and use_pcl need a decoupling (use_dwt or use_channel_split)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError(f"epochs and batch_size must be positive, got {self.epochs}, {self.batch_size}")
        if self.shuffle not in SHUFFLE_MODES:
            raise ValueError(f"shuffle must be one of {SHUFFLE_MODES}, got {self.shuffle!r}")
        if any(not 0 < m <= 1 for m in self.milestones):
            raise ValueError(f"milestones are fractions of the epoch budget in (0, 1], got {self.milestones}")
        self.contrastive  # validates alpha, beta, tau

    @property
    def decoupled(self) -> bool:
        return self.use_dwt or self.use_channel_split

    @property
    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(self.alpha, self.beta, self.tau)

    def milestone_epochs(self) -> list[int]:
        return [max(1, int(round(m * self.epochs))) for m in self.milestones]

    def lr_at(self, epoch: int) -> float:
        passed = sum(epoch >= m for m in self.milestone_epochs())
        return self.lr * self.gamma**passed

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# ablation rows: name -> component switches
ABLATIONS = {
    "baseline": dict(use_dwt=False, use_da=False, use_ta=False, use_pcl=False, use_channel_split=False),
    "dwt": dict(use_dwt=True, use_da=False, use_ta=False, use_pcl=False, use_channel_split=False),
    "dwt+da": dict(use_dwt=True, use_da=True, use_ta=False, use_pcl=False, use_channel_split=False),
    "split+da": dict(use_dwt=False, use_da=True, use_ta=False, use_pcl=False, use_channel_split=True),
    "dwt+da+pcl": dict(use_dwt=True, use_da=True, use_ta=False, use_pcl=True, use_channel_split=False),
    "dwt+da+ta": dict(use_dwt=True, use_da=True, use_ta=True, use_pcl=False, use_channel_split=False),
    "full": dict(use_dwt=True, use_da=True, use_ta=True, use_pcl=True, use_channel_split=False),
}


@dataclass
class ForwardOutput:
    logits_fuse: Tensor
    logits_salient: Tensor | None
    subtle_pooled: Tensor | None
    att: Tensor | None
    salient: Tensor | None = None
    subtle: Tensor | None = None
    fuse: Tensor | None = None
    embed: Tensor | None = None


@dataclass
class LossParts:
    total: Tensor
    fuse: float
    salient: float
    proto: float


def channel_split_control(x_embed) -> tuple[Tensor, Tensor]:
    """Halve the channels instead of the spectrum.

    The first ``C/2`` channels feed the salient path and the rest the subtle
    path; each is pooled to ``T/2`` frames by pairwise averaging.
    """
    x = tn.as_tensor(x_embed)
    n, c, t, v = x.shape
    if c % 2 or t % 2:
        raise ShapeError(f"channel split needs even C and T, got {x.shape}")
    pooled = tn.mean(tn.reshape(x, (n, c, t // 2, 2, v)), axis=3)
    return pooled[:, : c // 2], pooled[:, c // 2:]


def fuse_features(salient: Tensor, subtle: Tensor) -> Tensor:
    if salient.shape != subtle.shape:
        raise ShapeError(f"fusion: shape mismatch {salient.shape} vs {subtle.shape}")
    return salient + subtle


def cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k}): {labels.min()}..{labels.max()}")
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -tn.mean(tn.sum(tn.log_softmax(logits, axis=1) * onehot, axis=1))


class WdceModel:
    """Parameters, prototype bank and configuration of one network."""

    def __init__(
        self,
        n_classes: int,
        T: int,
        V: int,
        c_in: int = 3,
        train: TrainConfig | None = None,
        backbone: BackboneConfig | None = None,
        edges=DEFAULT_EDGES,
    ):
        self.train = train or TrainConfig()
        self.backbone = backbone or BackboneConfig()
        self.K, self.T, self.V, self.c_in = int(n_classes), int(T), int(V), int(c_in)
        if self.T % 2:
            raise ValueError(f"T must be even, got {T}")
        self.graph: SkeletonGraph = build_graph(edges, self.V)
        self.filters = build_haar(self.T)
        rng = Rng(self.train.seed).split("params")
        C = self.backbone.out_channels
        if self.train.use_channel_split and C % 2:
            raise ValueError(f"channel split needs even channels, got {C}")
        head_dim = C // 2 if self.train.use_channel_split else C
        params = {f"backbone.{k}": v for k, v in init_backbone(rng.split("backbone"), self.backbone, self.c_in).items()}
        if self.train.use_da:
            params.update({f"da.{k}": v for k, v in init_decoupling(rng.split("da"), C, self.T).items()})
        if self.train.use_ta:
            params.update({f"ta.{k}": v for k, v in init_trajectory(rng.split("ta"), head_dim, self.V, self.train.d_att).items()})
        params["head_fuse.w"] = uniform_param(rng.split("head_fuse"), (head_dim, self.K), head_dim)
        params["head_fuse.b"] = zeros_param(self.K)
        if self.train.decoupled:
            params["head_salient.w"] = uniform_param(rng.split("head_salient"), (head_dim, self.K), head_dim)
            params["head_salient.b"] = zeros_param(self.K)
        self.params: dict[str, Tensor] = params
        self.head_dim = head_dim
        self.bank = PrototypeBank(self.K, head_dim, head_dim * self.V, self.train.proto_momentum) if self.train.use_pcl else None

    def sub(self, prefix: str) -> dict[str, Tensor]:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # -- forward / objective ----------------------------------------------------------
    def forward(self, x) -> ForwardOutput:
        x = tn.as_tensor(x)
        if x.ndim != 4 or x.shape[1:] != (self.c_in, self.T, self.V):
            raise ShapeError(f"forward: expected (N, {self.c_in}, {self.T}, {self.V}), got {x.shape}")
        cfg = self.train
        embed = extract(x, self.backbone, self.graph, self.sub("backbone"))
        if not cfg.decoupled:
            logits = self._head(tn.mean(embed, axis=(2, 3)), "head_fuse")
            return ForwardOutput(logits, None, None, None, fuse=embed, embed=embed)

        n, c, _, v = embed.shape
        if cfg.use_dwt:
            low, high = dwt(grid_to_band(embed), self.filters)
            low, high = band_to_grid(low, c, v), band_to_grid(high, c, v)
        else:
            low, high = channel_split_control(embed)
        if cfg.use_da:
            salient, subtle, _ = decoupling_attention(embed, low, high, self.sub("da"))
        else:
            salient, subtle = low, high
        att = None
        if cfg.use_ta:
            subtle, att = trajectory_attention(subtle, self.sub("ta"))
        fused = fuse_features(salient, subtle)
        subtle_pooled = tn.mean(subtle, axis=(2, 3))
        return ForwardOutput(
            logits_fuse=self._head(tn.mean(fused, axis=(2, 3)), "head_fuse"),
            logits_salient=self._head(tn.mean(salient, axis=(2, 3)), "head_salient"),
            subtle_pooled=subtle_pooled,
            att=att,
            salient=salient,
            subtle=subtle,
            fuse=fused,
            embed=embed,
        )

    def _head(self, pooled: Tensor, name: str) -> Tensor:
        return tn.matmul(pooled, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def loss(self, out: ForwardOutput, labels) -> LossParts:
        cfg = self.train
        labels = np.asarray(labels, dtype=np.int64)
        l_fuse = cross_entropy(out.logits_fuse, labels)
        total = l_fuse * cfg.lambda_fuse
        l_sal = l_proto = None
        if out.logits_salient is not None:
            l_sal = cross_entropy(out.logits_salient, labels)
            total = total + l_sal * cfg.lambda_salient
        if cfg.use_pcl:
            l_proto = prototype_loss(self.bank, out.subtle_pooled, out.att, labels, cfg.contrastive)
            total = total + l_proto * cfg.lambda_proto
        return LossParts(
            total,
            l_fuse.item(),
            0.0 if l_sal is None else l_sal.item(),
            0.0 if l_proto is None else l_proto.item(),
        )

    def predict_logits(self, x, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        chunks = []
        with tn.no_grad():
            for i in range(0, len(x), batch_size):
                chunks.append(self.forward(x[i:i + batch_size]).logits_fuse.data)
        return np.concatenate(chunks) if chunks else np.zeros((0, self.K))

    # -- persistence -------------------------------------------------------------------------
    def manifest(self) -> dict:
        return {
            "K": self.K,
            "T": self.T,
            "V": self.V,
            "c_in": self.c_in,
            "edges": [list(e) for e in self.graph.edges],
            "train": _jsonable(asdict(self.train)),
            "backbone": _jsonable(asdict(self.backbone)),
        }

    @classmethod
    def from_manifest(cls, m: dict) -> "WdceModel":
        return cls(
            m["K"], m["T"], m["V"], m["c_in"],
            TrainConfig(**m["train"]), BackboneConfig(**m["backbone"]),
            [tuple(e) for e in m["edges"]],
        )


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def save_checkpoint(path, model: WdceModel, momentum_buffers: dict[str, np.ndarray] | None = None, extra: dict | None = None) -> None:
    meta = {"kind": "wdce-checkpoint", "model": model.manifest(), "extra": extra or {}}
    entries = [(f"param/{k}", p.data) for k, p in sorted(model.params.items())]
    for k, buf in sorted((momentum_buffers or {}).items()):
        entries.append((f"momentum/{k}", buf))
    if model.bank is not None:
        meta["bank"] = model.bank.header()
        entries += [("bank/feat", model.bank.feat), ("bank/att", model.bank.att)]
    write_container(path, meta, entries)


def load_checkpoint(path) -> tuple[WdceModel, dict[str, np.ndarray], dict]:
    meta, entries = read_container(path)
    if meta.get("kind") != "wdce-checkpoint":
        raise ValueError(f"{path} is not a checkpoint (kind={meta.get('kind')!r})")
    model = WdceModel.from_manifest(meta["model"])
    table = dict(entries)
    for k, p in model.params.items():
        arr = table.get(f"param/{k}")
        if arr is None or arr.shape != p.shape:
            raise ValueError(f"checkpoint parameter {k} missing or mis-shaped")
        p.data = arr.copy()
    momentum = {k[len("momentum/"):]: v for k, v in table.items() if k.startswith("momentum/")}
    if "bank" in meta:
        model.bank = PrototypeBank.from_header(meta["bank"], table["bank/feat"], table["bank/att"])
    return model, momentum, meta.get("extra", {})


# -- modalities ----------------------------------------------------------------------------

MODALITIES = ("joint", "bone", "joint_motion", "bone_motion")


def derive_modalities(joints, graph: SkeletonGraph, root: int = 0) -> dict[str, np.ndarray]:
    """Joint, bone, and their frame-difference streams from ``(..., V, T, 3)`` arrays."""
    x = np.asarray(joints, dtype=np.float64)
    if x.ndim < 3 or x.shape[-3] != graph.V:
        raise ShapeError(f"derive_modalities: expected (..., {graph.V}, T, C), got {x.shape}")
    parent = graph.parents(root)
    bone = x - np.take(x, parent, axis=-3)

    def motion(a):
        m = np.zeros_like(a)
        m[..., :-1, :] = a[..., 1:, :] - a[..., :-1, :]
        return m

    return {"joint": x, "bone": bone, "joint_motion": motion(x), "bone_motion": motion(bone)}


def ensemble_logits(models: dict[str, WdceModel], inputs: dict[str, np.ndarray]) -> np.ndarray:
    """Average of the fused-head logits of one model per modality."""
    if set(models) != set(inputs):
        raise ValueError(f"modalities differ: models {sorted(models)} vs inputs {sorted(inputs)}")
    logits = [models[k].predict_logits(inputs[k]) for k in sorted(models)]
    return np.mean(logits, axis=0)
