"""Feature extraction stack: ST-GC layers followed by SSA-Tformer layers.

All layers operate on ``(N, C, T, V)`` tensors and keep ``T`` unchanged.
Weights live in flat ``dict[str, Tensor]`` parameter maps keyed by
``"<layer>.<name>"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .rng import Rng
from .tensor import ShapeError, Tensor

DEFAULT_EDGES = ((0, 1), (0, 2), (0, 3), (3, 4), (4, 5), (5, 6))


def default_edges(V: int) -> tuple[tuple[int, int], ...]:
    """The 7-joint toy skeleton when ``V == 7``, otherwise a chain."""
    if V == 7:
        return DEFAULT_EDGES
    return tuple((i, i + 1) for i in range(V - 1))


@dataclass(frozen=True)
class SkeletonGraph:
    V: int
    edges: tuple[tuple[int, int], ...]
    A_norm: np.ndarray

    def parents(self, root: int = 0) -> np.ndarray:
        """Parent of each joint in a BFS spanning tree from ``root`` (root maps to itself)."""
        adj = [[] for _ in range(self.V)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        parent = np.full(self.V, -1)
        parent[root] = root
        queue = [root]
        while queue:
            u = queue.pop(0)
            for w in sorted(adj[u]):
                if parent[w] < 0:
                    parent[w] = u
                    queue.append(w)
        if (parent < 0).any():
            missing = np.flatnonzero(parent < 0).tolist()
            raise ValueError(f"skeleton graph is disconnected; joints {missing} unreachable from {root}")
        return parent


def build_graph(edges, V: int) -> SkeletonGraph:
    """Symmetric-normalized adjacency with self-loops, ``D^-1/2 (A + I) D^-1/2``."""
    if V < 1:
        raise ValueError(f"V must be positive, got {V}")
    A = np.eye(V)
    seen = set()
    norm_edges = []
    for a, b in edges:
        a, b = int(a), int(b)
        if not (0 <= a < V and 0 <= b < V):
            raise ValueError(f"edge ({a}, {b}) has an endpoint outside [0, {V})")
        key = (min(a, b), max(a, b))
        if key in seen or a == b:
            raise ValueError(f"duplicate or self edge ({a}, {b})")
        seen.add(key)
        norm_edges.append((a, b))
        A[a, b] = A[b, a] = 1.0
    d = 1.0 / np.sqrt(A.sum(axis=1))
    A_norm = d[:, None] * A * d[None, :]
    A_norm.flags.writeable = False
    return SkeletonGraph(V, tuple(norm_edges), A_norm)


@dataclass
class BackboneConfig:
    n_stgc: int = 3
    n_ssa: int = 2
    channels: tuple[int, ...] = (16, 32)
    heads: int = 2
    tcn_kernel: int = 9

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.n_stgc < 1 or self.n_ssa < 1 or self.heads < 1:
            raise ValueError(f"layer and head counts must be >= 1, got {self.n_stgc}, {self.n_ssa}, {self.heads}")
        if not self.channels or min(self.channels) < 1:
            raise ValueError(f"channels must be positive, got {self.channels}")
        if self.tcn_kernel < 1 or self.tcn_kernel % 2 == 0:
            raise ValueError(f"tcn_kernel must be odd and positive, got {self.tcn_kernel}")
        if self.channels[-1] % self.heads:
            raise ValueError(f"channels {self.channels[-1]} not divisible by heads {self.heads}")

    @property
    def out_channels(self) -> int:
        return self.channels[-1]

    def stgc_dims(self, c_in: int) -> list[tuple[int, int]]:
        dims = []
        for i in range(self.n_stgc):
            c_out = self.channels[-1] if i == self.n_stgc - 1 else self.channels[0]
            dims.append((c_in, c_out))
            c_in = c_out
        return dims


RELU_GAIN = np.sqrt(6.0)


def uniform_param(rng: Rng, shape, fan_in: int, gain: float = 1.0) -> Tensor:
    """Uniform in ``+-gain/sqrt(fan_in)``; ``RELU_GAIN`` keeps variance through relu."""
    bound = gain / np.sqrt(fan_in)
    return Tensor(rng.uniform(shape, -bound, bound), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_stgc(rng: Rng, c_in: int, c_out: int, kernel: int) -> dict[str, Tensor]:
    return {
        "gcn_w": uniform_param(rng.split("gcn_w"), (c_out, c_in), c_in, RELU_GAIN),
        "gcn_b": zeros_param(c_out),
        **init_tcn(rng, c_out, kernel),
    }


def init_tcn(rng: Rng, c: int, kernel: int) -> dict[str, Tensor]:
    return {
        "tcn_w": uniform_param(rng.split("tcn_w"), (c, c, kernel, 1), c * kernel, RELU_GAIN),
        "tcn_b": zeros_param(c),
    }


def init_ssa(rng: Rng, c: int, kernel: int) -> dict[str, Tensor]:
    p = {}
    for name in ("q", "k", "v", "o"):
        p[f"w{name}"] = uniform_param(rng.split(f"w{name}"), (c, c), c)
        p[f"b{name}"] = zeros_param(c)
    p.update(init_tcn(rng, c, kernel))
    return p


def init_backbone(rng: Rng, cfg: BackboneConfig, c_in: int) -> dict[str, Tensor]:
    params = {}
    for i, (a, b) in enumerate(cfg.stgc_dims(c_in)):
        for k, v in init_stgc(rng.split("stgc", i), a, b, cfg.tcn_kernel).items():
            params[f"stgc{i}.{k}"] = v
    for i in range(cfg.n_ssa):
        for k, v in init_ssa(rng.split("ssa", i), cfg.out_channels, cfg.tcn_kernel).items():
            params[f"ssa{i}.{k}"] = v
    return params


def _sub(params: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


def channel_map(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1x1 map over the channel axis of ``(N, C, T, V)``: ``w`` is ``(C_out, C_in)``."""
    y = tn.matmul(tn.transpose(x, (0, 2, 3, 1)), tn.transpose(w, (1, 0)))
    if b is not None:
        y = y + b
    return tn.transpose(y, (0, 3, 1, 2))


def tcn_block(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-joint temporal convolution with same-length padding, then relu."""
    k = w.shape[2]
    return tn.relu(tn.conv2d(x, w, b, padding=(k // 2, 0)))


def st_gc_layer(x: Tensor, graph: SkeletonGraph, p: dict[str, Tensor]) -> Tensor:
    x = tn.as_tensor(x)
    c_out, c_in = p["gcn_w"].shape
    if x.ndim != 4 or x.shape[1] != c_in or x.shape[3] != graph.V:
        raise ShapeError(f"st_gc_layer: input {x.shape} vs weights ({c_out}, {c_in}) and V={graph.V}")
    y = tn.matmul(x, graph.A_norm)
    y = tn.relu(channel_map(y, p["gcn_w"], p["gcn_b"]))
    y = tcn_block(y, p["tcn_w"], p["tcn_b"])
    return y + x if c_in == c_out else y


def spatial_attention(x: Tensor, p: dict[str, Tensor], heads: int) -> tuple[Tensor, Tensor]:
    """Per-frame multi-head self-attention over joints.

    Returns the attended output ``(N, C, T, V)`` (without residual) and the
    attention weights ``(N, T, heads, V, V)``.
    """
    n, c, t, v = x.shape
    if c % heads:
        raise ShapeError(f"spatial_attention: channels {c} not divisible by heads {heads}")
    dh = c // heads
    xt = tn.transpose(x, (0, 2, 3, 1))  # N T V C

    def split_heads(w, b):
        y = tn.matmul(xt, tn.transpose(w, (1, 0))) + b
        return tn.transpose(tn.reshape(y, (n, t, v, heads, dh)), (0, 1, 3, 2, 4))  # N T h V dh

    q = split_heads(p["wq"], p["bq"])
    k = split_heads(p["wk"], p["bk"])
    val = split_heads(p["wv"], p["bv"])
    scores = tn.matmul(q, tn.transpose(k, (0, 1, 2, 4, 3))) * (1.0 / np.sqrt(dh))
    att = tn.softmax(scores, axis=-1)
    out = tn.matmul(att, val)  # N T h V dh
    out = tn.reshape(tn.transpose(out, (0, 1, 3, 2, 4)), (n, t, v, c))
    out = tn.matmul(out, tn.transpose(p["wo"], (1, 0))) + p["bo"]
    return tn.transpose(out, (0, 3, 1, 2)), att


def ssa_tformer_layer(x: Tensor, p: dict[str, Tensor], heads: int) -> Tensor:
    x = tn.as_tensor(x)
    if x.ndim != 4 or x.shape[1] != p["wq"].shape[0]:
        raise ShapeError(f"ssa_tformer_layer: input {x.shape} vs weights {p['wq'].shape}")
    attended, _ = spatial_attention(x, p, heads)
    y = x + attended
    return tcn_block(y, p["tcn_w"], p["tcn_b"]) + y


def extract(x, cfg: BackboneConfig, graph: SkeletonGraph, params: dict[str, Tensor]) -> Tensor:
    """Embed ``(N, C_in, T, V)`` skeletons into ``(N, C, T, V)`` features."""
    x = tn.as_tensor(x)
    if x.ndim != 4 or x.shape[2] % 2:
        raise ShapeError(f"extract: expected (N, C_in, T, V) with even T, got {x.shape}")
    for i in range(cfg.n_stgc):
        x = st_gc_layer(x, graph, _sub(params, f"stgc{i}"))
    for i in range(cfg.n_ssa):
        x = ssa_tformer_layer(x, _sub(params, f"ssa{i}"), cfg.heads)
    return x
