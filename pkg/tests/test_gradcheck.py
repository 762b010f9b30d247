import numpy as np
import pytest

from wdce import tensor as tn
from wdce.gradcheck import GradCheckError, grad_check
from wdce.tensor import Tensor


def test_sum_of_squares_is_exact_to_1e8():
    x = Tensor([1.0, 2.0, 3.0])
    assert grad_check(lambda t: tn.sum(t * t), [x], step=1e-6) < 1e-8


def test_detects_wrong_backward():
    def bad_square(x):
        return Tensor._node(x.data**2, (x,), lambda g: (g * x.data,), "bad_square")  # should be 2x

    err = grad_check(lambda x: tn.sum(bad_square(x)), [Tensor([1.0, 2.0])])
    assert err > 0.1


def test_non_finite_probe_names_coordinate():
    x = Tensor([[1.0, 1e-7]])
    with pytest.raises(GradCheckError, match=r"\(0, 1\)"):
        grad_check(lambda t: tn.sum(tn.log(t)), [x], step=1e-6)


def test_max_coords_subsamples():
    x = Tensor(np.linspace(-1, 1, 50))
    assert grad_check(lambda t: tn.sum(tn.exp(t)), [x], max_coords=5) < 1e-8


def test_rejects_non_scalar_and_bad_step():
    with pytest.raises(ValueError):
        grad_check(lambda t: t * 2.0, [Tensor([1.0, 2.0])])
    with pytest.raises(ValueError):
        grad_check(lambda t: tn.sum(t), [Tensor([1.0])], step=0.0)
