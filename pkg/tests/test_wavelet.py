import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wdce.tensor import ShapeError, Tensor
from wdce.wavelet import band_energy, build_haar, dwt, idwt

R2 = math.sqrt(2.0)


def test_smallest_filters():
    f = build_haar(2)
    np.testing.assert_array_equal(f.low, [[1 / R2], [1 / R2]])
    np.testing.assert_array_equal(f.high, [[1 / R2], [-1 / R2]])


@pytest.mark.parametrize("T", [2, 4, 8, 16, 32, 64])
def test_filter_structure_and_algebra(T):
    f = build_haar(T)
    for j in range(T // 2):
        assert np.count_nonzero(f.low[:, j]) == 2 and np.count_nonzero(f.high[:, j]) == 2
        assert f.low[2 * j, j] == f.low[2 * j + 1, j] == 1 / R2
        assert f.high[2 * j, j] == 1 / R2 and f.high[2 * j + 1, j] == -1 / R2
    eye = np.eye(T // 2)
    assert np.abs(f.low.T @ f.low - eye).max() < 1e-12
    assert np.abs(f.high.T @ f.high - eye).max() < 1e-12
    assert np.abs(f.low.T @ f.high).max() < 1e-12
    assert np.abs(f.low @ f.low.T + f.high @ f.high.T - np.eye(T)).max() < 1e-12


def test_T4_orthonormality_to_the_last_bit():
    # 1/sqrt(2) has no binary64 representation, so "exact" means one rounding step
    f = build_haar(4)
    g = f.low.T @ f.low
    assert np.array_equal(g - np.diag(np.diag(g)), np.zeros((2, 2)))
    assert np.all(np.abs(np.diag(g) - 1.0) <= 2 * np.spacing(1.0))


@pytest.mark.parametrize("T", [0, 1, 3, 7, -2])
def test_odd_or_small_T_rejected(T):
    with pytest.raises(ValueError, match="even"):
        build_haar(T)


def test_filters_are_read_only():
    f = build_haar(4)
    with pytest.raises(ValueError):
        f.low[0, 0] = 1.0


def test_constant_row_has_no_high_band():
    lo, hi = dwt(np.full((1, 1, 4), 3.0), build_haar(4))
    np.testing.assert_allclose(lo.data, [[[3 * R2, 3 * R2]]], rtol=1e-15)
    np.testing.assert_array_equal(hi.data, 0.0)


def test_hand_computed_row():
    lo, hi = dwt(np.array([[[1.0, 3.0, 2.0, 4.0]]]), build_haar(4))
    np.testing.assert_allclose(lo.data[0, 0], [4 / R2, 6 / R2], rtol=1e-15)
    np.testing.assert_allclose(hi.data[0, 0], [-2 / R2, -2 / R2], rtol=1e-15)


def test_output_shapes_halve_time():
    lo, hi = dwt(np.zeros((3, 21, 32)), build_haar(32))
    assert lo.shape == hi.shape == (3, 21, 16)


@pytest.mark.parametrize("T", [2, 4, 8, 16, 32, 64])
def test_round_trip(T, np_rng):
    f = build_haar(T)
    x = np_rng.normal(size=(4, 5, T))
    assert np.abs(idwt(*dwt(x, f), f).data - x).max() < 1e-12


def test_extent_mismatch_rejected():
    f = build_haar(8)
    with pytest.raises(ShapeError):
        dwt(np.zeros((2, 3, 6)), f)
    with pytest.raises(ShapeError):
        idwt(np.zeros((2, 4)), np.zeros((2, 3)), f)
    with pytest.raises(ShapeError):
        idwt(np.zeros((2, 3)), np.zeros((2, 3)), f)


def test_gradient_flows_through_transform():
    f = build_haar(4)
    x = Tensor(np.arange(4.0), requires_grad=True)
    lo, hi = dwt(x, f)
    (lo.sum() + hi.sum() * 2.0).backward()
    np.testing.assert_allclose(x.grad, f.low.sum(axis=1) + 2 * f.high.sum(axis=1), rtol=1e-15)


@given(st.integers(1, 32).map(lambda h: 2 * h).flatmap(
    lambda T: arrays(np.float64, (3, T), elements=st.floats(-1e3, 1e3, allow_nan=False))))
def test_parseval_and_linearity(x):
    f = build_haar(x.shape[1])
    lo, hi = dwt(x, f)
    e = (x**2).sum()
    e_lo, e_hi = band_energy(x, f)
    assert abs(e - e_lo - e_hi) <= 1e-10 * max(e, 1.0)
    lo2, hi2 = dwt(2.0 * x + 1.0, f)
    lo1, hi1 = dwt(np.ones_like(x), f)
    np.testing.assert_allclose(lo2.data, 2 * lo.data + lo1.data, atol=1e-9)
    np.testing.assert_allclose(hi2.data, 2 * hi.data + hi1.data, atol=1e-9)
