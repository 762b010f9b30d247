"""Property suites behind ``wdce verify``.

Each suite returns a list of :class:`Check` records holding the measured
worst-case value, the bound it is held to, and whether it passed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as tn
from .attention import decoupling_attention, decoupling_weights, init_decoupling, init_trajectory, trajectory_attention
from .backbone import BackboneConfig, build_graph, default_edges, init_ssa, init_stgc, spatial_attention, ssa_tformer_layer, st_gc_layer
from .contrastive import ContrastiveConfig, PrototypeBank, prototype_loss, update_prototypes
from .gradcheck import grad_check
from .model import TrainConfig, WdceModel, channel_split_control, cross_entropy
from .rng import Rng
from .tensor import Tensor
from .wavelet import build_haar, dwt, idwt

T_SWEEP = (2, 4, 8, 16, 32, 64)
GRAD_TOL = 1e-5
GRAD_STEP = 1e-6
# micro configuration for gradient checks
MICRO = dict(N=2, C=8, T=8, V=5, K=3)


@dataclass
class Check:
    suite: str
    name: str
    value: float
    bound: float
    passed: bool

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"[{status}] {self.suite}.{self.name}: {self.value:.3e} (bound {self.bound:.0e})"


def _le(suite, name, value, bound, strict: bool = True) -> Check:
    """``value < bound`` (or ``<=`` with ``strict=False`` for exact checks)."""
    value = float(value)
    ok = value < bound if strict else value <= bound
    return Check(suite, name, value, bound, bool(math.isfinite(value) and ok))


# -- wavelet ----------------------------------------------------------------------


def wavelet_suite(seed: int = 0, rows: int = 100) -> list[Check]:
    rng = Rng(seed).split("wavelet")
    rec = pars = alg = 0.0
    for T in T_SWEEP:
        f = build_haar(T)
        x = rng.split(T).normal((rows, T))
        lo, hi = dwt(x, f)
        back = idwt(lo, hi, f).data
        rec = max(rec, np.abs(back - x).max())
        e = (x**2).sum(axis=1)
        pars = max(pars, (np.abs(e - (lo.data**2).sum(axis=1) - (hi.data**2).sum(axis=1)) / e).max())
        L, H = f.low, f.high
        eye = np.eye(T // 2)
        for m, ref in ((L.T @ L, eye), (H.T @ H, eye), (L.T @ H, 0 * eye), (L @ L.T + H @ H.T, np.eye(T))):
            alg = max(alg, np.abs(m - ref).max())
    lo, hi = dwt(np.array([[1.0, 3.0, 2.0, 4.0]]), build_haar(4))
    r2 = math.sqrt(2.0)
    known = max(np.abs(lo.data - [2 * r2, 3 * r2]).max(), np.abs(hi.data + r2).max())
    return [
        _le("wavelet", "reconstruction_max_abs", rec, 1e-12),
        _le("wavelet", "parseval_max_rel", pars, 1e-10),
        _le("wavelet", "filter_algebra_max_abs", alg, 1e-12),
        _le("wavelet", "known_row_max_abs", known, 1e-12),
    ]


# -- attention ----------------------------------------------------------------------


def _zeroed(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(np.zeros(p.shape), requires_grad=True) for k, p in params.items()}


def attention_suite(seed: int = 0, trials: int = 10) -> list[Check]:
    rng = Rng(seed).split("attention")
    n, c, t, v = 3, 6, 8, 5
    row_dev = 0.0
    att_out = da_out = 0
    argmax_flips = 0
    for i in range(trials):
        r = rng.split(i)
        ta = init_trajectory(r.split("ta"), c, v)
        da = init_decoupling(r.split("da"), c, t)
        x = r.split("x").normal((n, c, t // 2, v), std=2.0)
        _, att = trajectory_attention(x, ta)
        row_dev = max(row_dev, np.abs(att.data.sum(axis=-1) - 1).max())
        att_out += int(((att.data <= 0) | (att.data >= 1)).sum())
        w = decoupling_weights(r.split("embed").normal((n, c, t, v)), da).data
        da_out += int(((w <= 0) | (w >= 1)).sum())
        # zero-bias scaling keeps the per-row argmax joint
        ta0 = dict(ta, mlp_a_b=Tensor(np.zeros(ta["mlp_a_b"].shape)), mlp_b_b=Tensor(np.zeros(ta["mlp_b_b"].shape)))
        a1 = trajectory_attention(x, ta0)[1].data.argmax(axis=-1)
        a2 = trajectory_attention(x * 3.7, ta0)[1].data.argmax(axis=-1)
        argmax_flips += int((a1 != a2).sum())

    r = rng.split("zero")
    embed = r.split("embed").normal((n, c, t, v))
    low = r.split("low").normal((n, c * v, t // 2))
    high = r.split("high").normal((n, c * v, t // 2))
    sal, sub, w = decoupling_attention(embed, low, high, _zeroed(init_decoupling(r, c, t)))
    half_dev = np.abs(w.data - 0.5).max()
    grid = lambda b: b.reshape(n, c, v, t // 2).transpose(0, 1, 3, 2)  # noqa: E731
    halved = max(np.abs(sal.data - grid(low) / 2).max(), np.abs(sub.data - grid(high) / 2).max())
    x = r.split("x").normal((n, c, t // 2, v))
    enh, att = trajectory_attention(x, _zeroed(init_trajectory(r, c, v)))
    uniform_dev = np.abs(att.data - 1.0 / v).max()
    enh_dev = np.abs(enh.data - x / v).max() / np.abs(x).max()
    enh0, att0 = trajectory_attention(np.zeros((n, c, t // 2, v)), _zeroed(init_trajectory(r, c, v)))
    zero_dev = max(np.abs(enh0.data).max(), np.abs(att0.data - 1.0 / v).max())
    return [
        _le("attention", "att_row_sum_max_dev", row_dev, 1e-10),
        _le("attention", "att_entries_outside_open_unit", att_out, 0, strict=False),
        _le("attention", "da_entries_outside_open_unit", da_out, 0, strict=False),
        _le("attention", "scaled_argmax_flips", argmax_flips, 0, strict=False),
        _le("attention", "zero_da_weights_minus_half", half_dev, 0, strict=False),
        _le("attention", "zero_da_outputs_halved", halved, 1e-15),
        _le("attention", "zero_ta_uniform_dev", uniform_dev, 1e-15),
        _le("attention", "zero_ta_enhanced_rel_dev", enh_dev, 1e-15),
        _le("attention", "zero_input_ta_dev", zero_dev, 1e-15),
    ]


# -- contrastive ----------------------------------------------------------------------


def _bank(protos: np.ndarray, att: np.ndarray | None = None) -> PrototypeBank:
    K, d = protos.shape
    att = np.ones((K, 1)) if att is None else att
    return PrototypeBank(K, d, att.shape[1], 0.9, protos.astype(float), att.astype(float),
                         np.ones(K, bool), np.ones(K, bool))


def contrastive_suite(seed: int = 0) -> list[Check]:
    rng = Rng(seed).split("contrastive")
    only_feat = ContrastiveConfig(alpha=1.0, beta=0.0, tau=0.1)
    # equal similarity to both prototypes
    bank = _bank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    eq = prototype_loss(bank, np.array([[1.0, 1.0]]), None, [0], only_feat).item()
    # similarity 1 to own prototype, 0 to the other
    sep = prototype_loss(bank, np.array([[2.0, 0.0]]), None, [0], only_feat).item()
    # both terms equal ln 2 under the default weights
    att_bank = _bank(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    mix = prototype_loss(att_bank, np.array([[1.0, 1.0]]), np.array([[3.0, 3.0]]), [1], ContrastiveConfig()).item()

    scale_dev = 0.0
    min_loss = np.inf
    for i in range(10):
        r = rng.split(i)
        K, d = 4, 6
        b = _bank(r.split("p").normal((K, d)), r.split("pa").normal((K, 5)))
        feats = r.split("f").normal((8, d))
        att = r.split("a").uniform((8, 5), 0.01, 1.0)
        labels = r.split("y").permutation(8) % K
        cfg = ContrastiveConfig()
        base = prototype_loss(b, feats, att, labels, cfg).item()
        scaled = prototype_loss(b, feats * r.split("s").uniform((8, 1), 0.1, 10.0), att * 7.0, labels, cfg).item()
        scale_dev = max(scale_dev, abs(base - scaled))
        min_loss = min(min_loss, base)

    ema_excess = -np.inf
    for i in range(5):
        r = rng.split("ema", i)
        b = PrototypeBank(2, 3, 1, 0.9)
        p0 = r.split("p0").normal((1, 3))
        target = r.split("v").normal((1, 3))
        update_prototypes(b, p0, None, [0], [True])
        for _ in range(100):
            update_prototypes(b, target, None, [0], [True])
        bound = 0.9**100 * np.linalg.norm(p0 - target) + 1e-12
        ema_excess = max(ema_excess, np.linalg.norm(b.feat[0] - target[0]) - bound)
    b = PrototypeBank(1, 2, 1, 0.9)
    update_prototypes(b, np.array([[1.0, 0.0]]), None, [0], [True])
    update_prototypes(b, np.array([[0.0, 1.0]]), None, [0], [True])
    ema_example = np.abs(b.feat[0] - [0.9, 0.1]).max()
    return [
        _le("contrastive", "equidistant_minus_ln2", abs(eq - math.log(2)), 1e-9),
        _le("contrastive", "separated_minus_closed_form", abs(sep - math.log1p(math.exp(-10))), 1e-9),
        _le("contrastive", "weighted_mix_minus_ln2", abs(mix - math.log(2)), 1e-9),
        _le("contrastive", "scale_invariance_max_dev", scale_dev, 1e-10),
        _le("contrastive", "negative_loss", max(0.0, -min_loss), 0, strict=False),
        _le("contrastive", "ema_bound_excess", max(ema_excess, 0.0), 0, strict=False),
        _le("contrastive", "ema_example_max_abs", ema_example, 1e-15),
    ]


# -- gradients ---------------------------------------------------------------------


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return tn.sum(out * weights)


def op_cases(rng: Rng) -> dict[str, tuple[Callable, list[Tensor]]]:
    """Scalar-valued probes of every differentiable primitive."""
    def t(name, shape, low=-1.0, high=1.0):
        return Tensor(rng.split(name).uniform(shape, low, high), requires_grad=True)

    def wsum(name, shape):
        w = rng.split("w", name).normal(shape)
        return lambda y: tn.sum(y * w)

    cases = {}
    cases["add"] = (lambda a, b, s=wsum("add", (3, 4)): s(a + b), [t("a", (3, 4)), t("b", (4,))])
    cases["sub"] = (lambda a, b, s=wsum("sub", (3, 4)): s(a - b), [t("a", (3, 1)), t("b", (3, 4))])
    cases["mul"] = (lambda a, b, s=wsum("mul", (2, 3, 4)): s(a * b), [t("a", (2, 3, 4)), t("b", (3, 1))])
    cases["div"] = (lambda a, b, s=wsum("div", (3, 4)): s(a / b), [t("a", (3, 4)), t("b", (3, 4), 0.5, 2.0)])
    cases["matmul"] = (lambda a, b, s=wsum("matmul", (2, 3, 5)): s(tn.matmul(a, b)), [t("a", (2, 3, 4)), t("b", (4, 5))])
    cases["conv2d"] = (
        lambda x, w, b, s=wsum("conv2d", (2, 3, 5, 4)): s(tn.conv2d(x, w, b, padding=(1, 0))),
        [t("x", (2, 2, 5, 4)), t("w", (3, 2, 3, 1)), t("b", (3,))],
    )
    cases["conv1d"] = (
        lambda x, w, b, s=wsum("conv1d", (2, 2, 6)): s(tn.conv1d(x, w, b, padding=1)),
        [t("x", (2, 3, 6)), t("w", (2, 3, 3)), t("b", (2,))],
    )
    cases["transpose"] = (lambda a, s=wsum("transpose", (4, 2, 3)): s(tn.transpose(a, (2, 0, 1))), [t("a", (2, 3, 4))])
    cases["reshape"] = (lambda a, s=wsum("reshape", (6, 4)): s(tn.reshape(a, (6, 4))), [t("a", (2, 3, 4))])
    cases["getitem"] = (lambda a, s=wsum("getitem", (2, 2)): s(a[np.array([0, 2]), 1:3]), [t("a", (3, 4))])
    cases["concatenate"] = (
        lambda a, b, s=wsum("concatenate", (2, 5)): s(tn.concatenate([a, b], axis=1)),
        [t("a", (2, 2)), t("b", (2, 3))],
    )
    cases["sum"] = (lambda a, s=wsum("sum", (2, 4)): s(tn.sum(a, axis=1)), [t("a", (2, 3, 4))])
    cases["mean"] = (lambda a, s=wsum("mean", (3,)): s(tn.mean(a, axis=(0, 2))), [t("a", (2, 3, 4))])
    cases["l2norm"] = (lambda a, s=wsum("l2norm", (3,)): s(tn.l2norm(a, axis=1)), [t("a", (3, 4))])
    cases["relu"] = (lambda a, s=wsum("relu", (3, 4)): s(tn.relu(a)), [t("a", (3, 4))])
    cases["sigmoid"] = (lambda a, s=wsum("sigmoid", (3, 4)): s(tn.sigmoid(a * 4.0)), [t("a", (3, 4))])
    cases["exp"] = (lambda a, s=wsum("exp", (3, 4)): s(tn.exp(a)), [t("a", (3, 4))])
    cases["log"] = (lambda a, s=wsum("log", (3, 4)): s(tn.log(a)), [t("a", (3, 4), 0.5, 2.0)])
    cases["softmax"] = (lambda a, s=wsum("softmax", (3, 4)): s(tn.softmax(a * 3.0, axis=1)), [t("a", (3, 4))])
    cases["log_softmax"] = (lambda a, s=wsum("log_softmax", (3, 4)): s(tn.log_softmax(a, axis=0)), [t("a", (3, 4))])
    return cases


def micro_model(seed: int = 0, **switches) -> WdceModel:
    """Full model at the micro configuration with a ready prototype bank."""
    m = MICRO
    train = TrainConfig(seed=seed, **switches)
    bb = BackboneConfig(n_stgc=2, n_ssa=1, channels=(m["C"], m["C"]), heads=2, tcn_kernel=3)
    model = WdceModel(m["K"], m["T"], m["V"], 3, train, bb, default_edges(m["V"]))
    if model.bank is not None:
        r = Rng(seed).split("bank")
        model.bank.feat[:] = r.split("feat").normal(model.bank.feat.shape)
        model.bank.att[:] = r.split("att").uniform(model.bank.att.shape, 0.1, 1.0)
        model.bank.initialized[:] = True
        model.bank.att_initialized[:] = True
    return model


def layer_cases(rng: Rng) -> dict[str, tuple[Callable, list[Tensor]]]:
    m = MICRO
    n, c, t, v, K = m["N"], m["C"], m["T"], m["V"], m["K"]
    graph = build_graph(default_edges(v), v)
    filters = build_haar(t)

    def leaf(name, shape, std=1.0):
        return Tensor(rng.split(name).normal(shape, std=std), requires_grad=True)

    def wsum(name, shape):
        w = rng.split("w", name).normal(shape)
        return lambda y: tn.sum(y * w)

    cases = {}
    s = wsum("dwt", (n, c * v, t // 2))
    cases["dwt"] = (lambda x, s=s: (lambda lo_hi: s(lo_hi[0]) + s(lo_hi[1]) * 0.5)(dwt(x, filters)), [leaf("dwt.x", (n, c * v, t))])
    s = wsum("idwt", (n, c * v, t))
    cases["idwt"] = (lambda lo, hi, s=s: s(idwt(lo, hi, filters)), [leaf("idwt.lo", (n, c * v, t // 2)), leaf("idwt.hi", (n, c * v, t // 2))])

    p = init_stgc(rng.split("stgc"), 3, c, 3)
    keys = sorted(p)
    s = wsum("stgc", (n, c, t, v))
    cases["st_gc_layer"] = (
        lambda x, *w, s=s: s(st_gc_layer(x, graph, dict(zip(keys, w)))),
        [leaf("stgc.x", (n, 3, t, v))] + [p[k] for k in keys],
    )
    p = init_ssa(rng.split("ssa"), c, 3)
    skeys = sorted(p)
    s = wsum("ssa", (n, c, t, v))
    cases["ssa_tformer_layer"] = (
        lambda x, *w, s=s: s(ssa_tformer_layer(x, dict(zip(skeys, w)), 2)),
        [leaf("ssa.x", (n, c, t, v))] + [p[k] for k in skeys],
    )
    s = wsum("mhsa", (n, c, t, v))
    cases["spatial_attention"] = (
        lambda x, *w, s=s: s(spatial_attention(x, dict(zip(skeys, w)), 2)[0]),
        [leaf("mhsa.x", (n, c, t, v))] + [init_ssa(rng.split("mhsa"), c, 3)[k] for k in skeys],
    )
    p = init_decoupling(rng.split("da"), c, t)
    dkeys = sorted(p)
    s1, s2 = wsum("da.sal", (n, c, t // 2, v)), wsum("da.sub", (n, c, t // 2, v))
    cases["decoupling_attention"] = (
        lambda e, lo, hi, *w, s1=s1, s2=s2: (lambda o: s1(o[0]) + s2(o[1]))(decoupling_attention(e, lo, hi, dict(zip(dkeys, w)))),
        [leaf("da.e", (n, c, t, v)), leaf("da.lo", (n, c * v, t // 2)), leaf("da.hi", (n, c * v, t // 2))] + [p[k] for k in dkeys],
    )
    p = init_trajectory(rng.split("ta"), c, v)
    tkeys = sorted(p)
    s1, s2 = wsum("ta.enh", (n, c, t // 2, v)), wsum("ta.att", (n, c, v))
    cases["trajectory_attention"] = (
        lambda x, *w, s1=s1, s2=s2: (lambda o: s1(o[0]) + s2(o[1]) * 3.0)(trajectory_attention(x, dict(zip(tkeys, w)))),
        [leaf("ta.x", (n, c, t // 2, v), std=2.0)] + [p[k] for k in tkeys],
    )
    s1, s2 = wsum("split.a", (n, c // 2, t // 2, v)), wsum("split.b", (n, c // 2, t // 2, v))
    cases["channel_split"] = (
        lambda e, s1=s1, s2=s2: (lambda o: s1(o[0]) + s2(o[1]))(channel_split_control(e)),
        [leaf("split.e", (n, c, t, v))],
    )
    labels = np.arange(n) % K
    cases["cross_entropy"] = (lambda z: cross_entropy(z, labels), [leaf("ce.z", (n, K))])
    bank = _bank(rng.split("bank.f").normal((K, c)), rng.split("bank.a").uniform((K, c * v), 0.1, 1.0))
    cases["prototype_loss"] = (
        lambda f, a: prototype_loss(bank, f, tn.softmax(a, axis=-1), labels, ContrastiveConfig(), strict=True),
        [leaf("pcl.f", (n, c)), leaf("pcl.a", (n, c * v))],
    )
    return cases


def full_loss_case(seed: int = 0) -> tuple[Callable, list[Tensor]]:
    model = micro_model(seed)
    m = MICRO
    r = Rng(seed).split("full")
    x = Tensor(r.split("x").normal((m["N"], 3, m["T"], m["V"])), requires_grad=True)
    labels = np.arange(m["N"]) % m["K"]
    names = sorted(model.params)

    def f(xx, *_params):
        out = model.forward(xx)
        return model.loss(out, labels).total

    return f, [x] + [model.params[k] for k in names]


def grad_suite(seed: int = 0, op_seeds: int = 3) -> list[Check]:
    checks = []
    for name in op_cases(Rng(0)):
        worst = max(grad_check(*op_cases(Rng(seed).split("ops", s))[name], step=GRAD_STEP) for s in range(op_seeds))
        checks.append(_le("grad", f"op.{name}", worst, GRAD_TOL))
    for name, (f, point) in layer_cases(Rng(seed).split("layers")).items():
        checks.append(_le("grad", f"layer.{name}", grad_check(f, point, step=GRAD_STEP), GRAD_TOL))
    f, point = full_loss_case(seed)
    checks.append(_le("grad", "full_loss", grad_check(f, point, step=GRAD_STEP), GRAD_TOL))
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "wavelet": wavelet_suite,
    "grad": grad_suite,
    "attention": attention_suite,
    "contrastive": contrastive_suite,
}


def run(suite: str = "all") -> list[Check]:
    if suite == "all":
        return [c for name in SUITES for c in SUITES[name]()]
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[suite]()
