import numpy as np
import pytest

from focalgmm import NumericalError, ValidationError
from focalgmm.debias import CorrectionConfig
from focalgmm.estimator import correction_bundle, first_stage
from focalgmm.model import PanelData
from focalgmm.rmd import RmdConfig
from focalgmm.splitting import SplitPlan, split_estimate
from helpers import iv_fixture

FIXED = RmdConfig(lam=1e-3, lambda_method="fixed")
SCHUR = CorrectionConfig(exact=True, b_form="schur")


def _stack(data, rows):
    return data.take(np.asarray(rows))


def test_plan_halves():
    plan = SplitPlan(11)
    a, b = plan.halves
    assert plan.cut == 5
    np.testing.assert_array_equal(a, np.arange(5))
    np.testing.assert_array_equal(b, np.arange(5, 11))
    with pytest.raises(ValidationError):
        SplitPlan(1)


@pytest.mark.parametrize("theta1", [None, [0], [1, 2]])
@pytest.mark.parametrize("cross", [True, False])
def test_noiseless_recovery(theta1, cross):
    data, spec, theta0 = iv_fixture(n=60, seed=1, noise=0.0, theta1=theta1)
    res = split_estimate(data, spec, FIXED, SCHUR, cross=cross, threshold_c=0.0)
    np.testing.assert_allclose(res.theta1, theta0[spec.theta1], atol=1e-8)
    assert res.residual() <= 1e-10


def test_scalar_target_is_a_ratio():
    data, spec, _ = iv_fixture(n=80, seed=2, theta1=[0])
    res = split_estimate(data, spec, FIXED, SCHUR, threshold_c=0.0)
    assert res.lhs.shape == (1, 1)
    assert res.theta1[0] == pytest.approx(res.rhs[0] / res.lhs[0, 0], rel=1e-14)


def test_identical_halves_reduce_to_single_fold():
    data, spec, _ = iv_fixture(n=40, seed=3, theta1=[0, 1])
    doubled = PanelData(np.vstack([data.y, data.y]), [np.vstack([data.x[0]] * 2)],
                        [np.vstack([data.z[0]] * 2)])
    res = split_estimate(doubled, spec, FIXED, SCHUR, threshold_c=0.0)
    mom, fit = first_stage(data, spec, FIXED)
    b, _ = correction_bundle(data, spec, mom, fit.theta, SCHUR, 0.0)
    A, G = b.A_hat, mom.G_hat
    t1, t2 = spec.theta1, spec.theta2
    ref = np.linalg.solve(A @ G[:, t1], -A @ (mom.g0_hat + G[:, t2] @ fit.theta[t2]))
    np.testing.assert_allclose(res.theta1, ref, atol=1e-10)


def test_swapping_halves():
    data, spec, _ = iv_fixture(n=100, seed=4, theta1=[0])
    swapped = _stack(data, np.r_[np.arange(50, 100), np.arange(50)])
    a = split_estimate(data, spec, FIXED, SCHUR, threshold_c=0.0).theta1
    b = split_estimate(swapped, spec, FIXED, SCHUR, threshold_c=0.0).theta1
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_errors():
    data, spec, _ = iv_fixture(n=19, seed=5)
    with pytest.raises(ValidationError, match="n >= 20"):
        split_estimate(data, spec, FIXED, SCHUR)
    # all-zero instruments make the pooled system singular
    data, spec, _ = iv_fixture(n=40, seed=5)
    dead = PanelData(data.y, data.x, [np.zeros_like(data.z[0])])
    with pytest.raises(NumericalError):
        split_estimate(dead, spec, FIXED, CorrectionConfig(exact=True), threshold_c=0.0)
