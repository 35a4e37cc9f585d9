import math

import numpy as np
import pytest

import oracles
from etcoord.coupling import IntervalError, arctan_law, grad_norm_sq, lambda_estimate, quadratic_law


def test_arctan_potential_at_one_matches_quadrature():
    law = arctan_law()
    ref = oracles.arctan_potential(1.0)
    assert law.potential(np.array([1.0])) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(0.1396822, abs=5e-8)


def test_arctan_psi_values():
    law = arctan_law()
    assert law.psi(np.array([1.0]))[0] == pytest.approx(0.25, abs=1e-15)
    assert law.psi(np.array([0.0]))[0] == 0.0
    assert np.all(np.abs(law.psi(np.array([-1e9, 1e9]))) < 0.5)


def test_arctan_gradient_at_origin_is_the_global_bound():
    law = arctan_law()
    assert grad_norm_sq(law, 0.0)[()] == pytest.approx(1 / math.pi ** 2, rel=1e-15)
    assert law.global_grad_bound == pytest.approx(1 / math.pi)
    assert law.value_bound == 0.5


def test_planar_arctan_bounds():
    law = arctan_law(n_p=2)
    assert law.value_bound == pytest.approx(math.sqrt(2) / 2)
    z = np.array([[0.3, -2.0]])
    # the Jacobian is diagonal, so its norm is the larger diagonal entry
    assert law.grad_norm_sq(z)[0] == pytest.approx((1 / (math.pi * 1.09)) ** 2)


def test_quadratic_law_with_offset():
    law = quadratic_law(offset=[1.0, -2.0])
    assert law.n_p == 2
    assert law.psi(np.array([1.0, -2.0])).tolist() == [0.0, 0.0]
    assert law.potential(np.array([2.0, -2.0])) == 0.5
    assert law.value_bound is None
    assert law.target_set.distance(np.array([4.0, 2.0])) == 5.0


@pytest.mark.parametrize("lo, hi", [(-0.3, 0.4), (0.5, 2.0), (-3.0, -1.0), (1.0, 1.0)])
def test_lambda_matches_dense_grid(lo, hi):
    law = arctan_law()
    ref = oracles.dense_box_max(law.grad_norm_sq, lo, hi)
    assert lambda_estimate(law, [lo], [hi]) == pytest.approx(ref, rel=1e-12)


def test_lambda_grid_path_dominates_dense_grid():
    # a law without the closed-form box maximum goes through the grid search
    base = arctan_law()
    law = type(base)(**{**base.__dict__, "box_max_grad_norm_sq": None})
    for lo, hi in [(-0.3, 0.4), (0.5, 2.0), (-3.0, -1.0)]:
        ref = oracles.dense_box_max(law.grad_norm_sq, lo, hi)
        est = lambda_estimate(law, [lo], [hi])
        assert est >= ref * (1 - 1e-9)
        assert est <= base.global_grad_bound ** 2


def test_empty_box_is_an_interval_error():
    with pytest.raises(IntervalError):
        lambda_estimate(arctan_law(), [1.0], [0.0])
