import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wdce.backbone import (
    DEFAULT_EDGES,
    BackboneConfig,
    build_graph,
    default_edges,
    extract,
    init_backbone,
    init_ssa,
    init_stgc,
    spatial_attention,
    ssa_tformer_layer,
    st_gc_layer,
)
from wdce.rng import Rng
from wdce.tensor import ShapeError


def test_two_joint_graph():
    np.testing.assert_allclose(build_graph([(0, 1)], 2).A_norm, [[0.5, 0.5], [0.5, 0.5]], rtol=1e-15)


def test_single_joint_graph():
    assert build_graph([], 1).A_norm.tolist() == [[1.0]]


@given(st.integers(2, 9), st.data())
def test_adjacency_invariants(V, data):
    pairs = [(a, b) for a in range(V) for b in range(a + 1, V)]
    edges = data.draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    A = build_graph(edges, V).A_norm
    assert np.array_equal(A, A.T)
    assert (A >= 0).all()
    assert np.abs(np.linalg.eigvalsh(A)).max() <= 1 + 1e-12
    assert A.max(axis=1).max() <= 1.0


def test_regular_graph_preserves_constants():
    ring = [(i, (i + 1) % 6) for i in range(6)]
    A = build_graph(ring, 6).A_norm
    np.testing.assert_allclose(A @ np.ones(6), 1.0, rtol=1e-15)
    full = [(a, b) for a in range(4) for b in range(a + 1, 4)]
    np.testing.assert_allclose(build_graph(full, 4).A_norm @ np.ones(4), 1.0, rtol=1e-15)


@pytest.mark.parametrize("edges,V", [([(0, 2)], 2), ([(0, 1), (1, 0)], 2), ([(1, 1)], 2), ([(-1, 0)], 2)])
def test_bad_edges_rejected(edges, V):
    with pytest.raises(ValueError):
        build_graph(edges, V)


def test_graph_is_read_only_and_parents():
    g = build_graph(DEFAULT_EDGES, 7)
    with pytest.raises(ValueError):
        g.A_norm[0, 0] = 2.0
    assert g.parents().tolist() == [0, 0, 0, 0, 3, 4, 5]
    with pytest.raises(ValueError, match="disconnected"):
        build_graph([(0, 1)], 3).parents()


def test_default_edges():
    assert default_edges(7) == DEFAULT_EDGES
    assert default_edges(4) == ((0, 1), (1, 2), (2, 3))


def test_config_validation():
    with pytest.raises(ValueError):
        BackboneConfig(n_ssa=0)
    with pytest.raises(ValueError):
        BackboneConfig(channels=(16, 30), heads=4)
    with pytest.raises(ValueError):
        BackboneConfig(tcn_kernel=4)
    assert BackboneConfig().stgc_dims(3) == [(3, 16), (16, 16), (16, 32)]


def _zero(p):
    for t in p.values():
        t.data[...] = 0.0
    return p


def test_stgc_zero_weights_leave_residual(np_rng):
    g = build_graph(DEFAULT_EDGES, 7)
    x = np_rng.normal(size=(2, 4, 6, 7))
    assert np.array_equal(st_gc_layer(x, g, _zero(init_stgc(Rng(0), 4, 4, 3))).data, x)
    assert np.array_equal(st_gc_layer(x, g, _zero(init_stgc(Rng(0), 4, 5, 3))).data, np.zeros((2, 5, 6, 7)))


def test_stgc_identity_composition(np_rng):
    g = build_graph([], 3)  # A_norm = I
    x = np.abs(np_rng.normal(size=(1, 2, 5, 3)))
    p = _zero(init_stgc(Rng(0), 2, 2, 3))
    p["gcn_w"].data[...] = np.eye(2)
    p["tcn_w"].data[:, :, 1, 0] = np.eye(2)
    np.testing.assert_allclose(st_gc_layer(x, g, p).data, 2 * x, rtol=1e-15)


def test_stgc_shape_mismatch():
    g = build_graph(DEFAULT_EDGES, 7)
    with pytest.raises(ShapeError):
        st_gc_layer(np.zeros((1, 3, 4, 7)), g, init_stgc(Rng(0), 4, 4, 3))
    with pytest.raises(ShapeError):
        st_gc_layer(np.zeros((1, 4, 4, 6)), g, init_stgc(Rng(0), 4, 4, 3))


def test_ssa_uniform_attention_with_zero_qk(np_rng):
    x = np_rng.normal(size=(2, 4, 3, 5))
    p = init_ssa(Rng(1), 4, 3)
    for k in ("wq", "wk"):
        p[k].data[...] = 0.0
    out, att = spatial_attention(x, p, heads=2)
    assert att.shape == (2, 3, 2, 5, 5)
    np.testing.assert_allclose(att.data, 0.2, rtol=1e-15)
    val = np.einsum("nctv,dc->ntvd", x, p["wv"].data)
    expected = np.einsum("ntvd,ed->netv", np.broadcast_to(val.mean(axis=2, keepdims=True), val.shape), p["wo"].data)
    np.testing.assert_allclose(out.data, expected, atol=1e-13)


def test_ssa_rows_sum_to_one_and_shapes(np_rng):
    x = np_rng.normal(size=(2, 4, 3, 5)) * 4
    p = init_ssa(Rng(2), 4, 3)
    _, att = spatial_attention(x, p, heads=2)
    assert np.abs(att.data.sum(-1) - 1).max() <= 1e-12
    assert ssa_tformer_layer(x, p, 2).shape == x.shape
    with pytest.raises(ShapeError):
        spatial_attention(x, p, heads=3)
    with pytest.raises(ShapeError):
        ssa_tformer_layer(np.zeros((1, 5, 3, 5)), p, 2)


def test_extract_shape_and_determinism(np_rng):
    cfg = BackboneConfig(n_stgc=2, n_ssa=1, channels=(8, 12), heads=2, tcn_kernel=3)
    g = build_graph(DEFAULT_EDGES, 7)
    x = np_rng.normal(size=(3, 3, 8, 7))
    a = extract(x, cfg, g, init_backbone(Rng(5), cfg, 3)).data
    b = extract(x, cfg, g, init_backbone(Rng(5), cfg, 3)).data
    assert a.shape == (3, 12, 8, 7)
    assert np.array_equal(a, b)
    with pytest.raises(ShapeError, match="even"):
        extract(np.zeros((1, 3, 7, 7)), cfg, g, init_backbone(Rng(5), cfg, 3))
