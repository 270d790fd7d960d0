from types import SimpleNamespace

import numpy as np
import pytest

from focalgmm import NumericalError, ValidationError
from focalgmm.inference import gaussian_max_quantile
from focalgmm.model import (NetworkSpec, PanelData, assemble_linear_moments,
                            build_spillover_transform, evaluate_scores,
                            single_equation_transform)
from focalgmm.rmd import RmdConfig, pilot_theta, select_lambda, solve_rmd
from oracles import dantzig_vertex


def _system(G, g0):
    G = np.atleast_2d(np.asarray(G, float))
    g0 = np.asarray(g0, float)
    return SimpleNamespace(G_hat=G, g0_hat=g0, moments=lambda t: G @ t + g0)


def _iid_fixture(n=400, q=10, seed=0):
    # y independent of z: the scores z_l * y have unit variance and no correlation
    rng = np.random.default_rng(seed)
    spec = single_equation_transform(np.ones(2))
    data = PanelData(rng.normal(size=(n, 1)), [rng.normal(size=(n, 2))],
                     [rng.normal(size=(n, q))])
    return data, spec, assemble_linear_moments(data, spec)


@pytest.mark.parametrize("backend", ["simplex", "highs"])
def test_large_lambda_gives_zero(backend):
    rng = np.random.default_rng(0)
    mom = _system(rng.normal(size=(6, 4)), rng.normal(size=6))
    res = solve_rmd(mom, RmdConfig(backend=backend), lam=1e9)
    np.testing.assert_array_equal(res.theta, np.zeros(4))


def test_one_dimensional_closed_form():
    res = solve_rmd(_system([[-1.0]], [1.0]), RmdConfig(), lam=0.1)
    assert res.theta[0] == pytest.approx(0.9, abs=1e-12)


def test_random_system_is_l1_minimal():
    rng = np.random.default_rng(7)
    G = rng.normal(size=(6, 10))
    g0 = rng.normal(size=6)
    lam = 0.2
    theta = solve_rmd(_system(G, g0), RmdConfig(), lam).theta
    assert np.abs(G @ theta + g0).max() <= lam + 1e-8
    # feasible competitors: exact solutions plus null-space moves
    base = np.linalg.lstsq(G, -g0, rcond=None)[0]
    null = np.linalg.svd(G)[2][6:].T
    for _ in range(1000):
        cand = base + null @ rng.normal(scale=2.0, size=4)
        assert np.abs(cand).sum() >= np.abs(theta).sum() - 1e-8


def test_small_system_matches_vertex_oracle():
    rng = np.random.default_rng(8)
    for _ in range(5):
        G = rng.normal(size=(4, 4))
        g0 = rng.normal(size=4)
        ref, _ = dantzig_vertex(G, g0, 0.3)
        theta = solve_rmd(_system(G, g0), RmdConfig(), 0.3).theta
        assert np.abs(theta).sum() == pytest.approx(ref, abs=1e-8)


def test_l1_norm_is_monotone_in_lambda():
    rng = np.random.default_rng(2)
    # more unknowns than moments: feasible for every lambda, so no escalation
    mom = _system(rng.normal(size=(5, 8)), rng.normal(size=5))
    fits = [solve_rmd(mom, RmdConfig(), lam) for lam in np.linspace(0.0, 2.0, 12)]
    assert not any(f.escalations for f in fits)
    norms = [np.abs(f.theta).sum() for f in fits]
    assert np.all(np.diff(norms) <= 1e-9)


def test_infeasible_lambda_escalates():
    G = np.array([[1.0, 0.5], [0.2, -1.0], [0.3, 0.3]])
    g0 = np.array([-1.0, 0.4, 0.1])
    res = solve_rmd(_system(G, g0), RmdConfig(), lam=0.3)
    assert res.escalations == [0.3]
    assert res.lam == pytest.approx(0.6)
    assert np.abs(G @ res.theta + g0).max() <= res.lam + 1e-8


def test_escalation_gives_up_after_ten_steps():
    # G = 0 with g0 far from zero can never be satisfied below 1e3
    mom = _system(np.zeros((1, 1)), [1e6])
    with pytest.raises(NumericalError, match="infeasible"):
        solve_rmd(mom, RmdConfig(), lam=1.0)


def test_config_validation():
    with pytest.raises(ValidationError):
        RmdConfig(lambda_method="fixed")
    with pytest.raises(ValidationError):
        RmdConfig(lam=np.inf)
    with pytest.raises(ValidationError):
        RmdConfig(ladder_factor=1.0)
    with pytest.raises(ValidationError):
        RmdConfig(lambda_method="magic")
    with pytest.raises(ValidationError):
        solve_rmd(_system([[1.0]], [0.0]), RmdConfig())


def test_rate_rule_formula():
    data, spec, mom = _iid_fixture()
    cfg = RmdConfig(lambda_method="rate_rule", pilot="zero")
    lam = select_lambda(mom, data, spec, cfg)
    s = data.z[0] * data.y[:, :1]
    assert lam == pytest.approx(1.1 * s.std(axis=0).max() * np.sqrt(np.log(10) / 400), rel=1e-12)
    # unit-variance scores: close to 1.1 sqrt(log q / n)
    assert lam == pytest.approx(0.0835, rel=0.15)


def test_score_bootstrap_matches_gaussian_maximum():
    data, spec, mom = _iid_fixture()
    cfg = RmdConfig(lambda_method="score_bootstrap", pilot="zero", n_boot=2000)
    lam = select_lambda(mom, data, spec, cfg)
    ref = gaussian_max_quantile(10, 0.05) / np.sqrt(400)
    assert lam == pytest.approx(ref, rel=0.10)


def test_rate_rule_shrinks_with_n():
    lams = []
    for n in (100, 400, 1600):
        data, spec, mom = _iid_fixture(n=n, seed=3)
        lams.append(select_lambda(mom, data, spec, RmdConfig(pilot="zero")))
    assert lams[0] > lams[1] > lams[2]


def test_cv_picks_a_grid_point():
    data, spec, mom = _iid_fixture(n=100)
    cfg = RmdConfig(lambda_method="cv")
    lam0 = select_lambda(mom, data, spec, RmdConfig())
    lam = select_lambda(mom, data, spec, cfg)
    grid = lam0 * 2 ** (-0.5 * np.arange(10))
    assert np.min(np.abs(grid - lam)) <= 1e-12 * lam0


def test_selection_rejects_short_panels():
    data, spec, mom = _iid_fixture(n=9)
    with pytest.raises(ValidationError):
        select_lambda(mom, data, spec, RmdConfig())


def test_network_pilot_leaves_deviations_at_zero():
    rng = np.random.default_rng(1)
    W = np.array([[0, 1, 1], [1, 0, 0], [1, 1, 0]], float)
    spec = build_spillover_transform(NetworkSpec(W), n_exog=1)
    n = 60
    x = [rng.normal(size=(n, 4)) for _ in range(3)]
    z = [rng.normal(size=(n, 6)) for _ in range(3)]
    data = PanelData(rng.normal(size=(n, 3)), x, z)
    mom = assemble_linear_moments(data, spec)
    th = pilot_theta(mom, spec)
    for i, nm in enumerate(spec.names):
        if nm.startswith("delta"):
            assert th[i] == 0.0
    keep = [i for i, nm in enumerate(spec.names) if not nm.startswith("delta")]
    ref = np.linalg.lstsq(mom.G_hat[:, keep], -mom.g0_hat, rcond=None)[0]
    np.testing.assert_allclose(th[keep], ref, atol=1e-12)
    # scores at the pilot are the residual moments of that fit
    np.testing.assert_allclose(evaluate_scores(data, spec, th).mean(axis=0),
                               mom.moments(th), atol=1e-12)
