"""Posterior pieces: transforms, likelihood oracle, fast-path/gradient checks."""

import numpy as np
import pytest
from scipy.stats import poisson

from stgrowth.graph import from_dense, ring_graph
from stgrowth.model import (
    CarArState,
    CountPanel,
    ModelSpec,
    ParamBlock,
    ParamLayout,
    PosteriorEvaluator,
    RichardsParams,
    constrain_draws,
    initial_unconstrained,
    log_likelihood,
    log_posterior_and_grad,
    log_prior,
    loglik_from_draws,
    mean_matrix,
    mu_from_draws,
    to_constrained,
    to_unconstrained,
)

# weighted 3-node path graph; the shape of the smallest real-data-like model
TOY_W = np.array([[0.0, 1.5, 0.0], [1.5, 0.0, 0.7], [0.0, 0.7, 0.0]])


def toy_setup(seed=0, k=1, g_n=3, t_n=6, trend="common"):
    rng = np.random.default_rng(seed)
    graph = from_dense(TOY_W) if g_n == 3 else ring_graph(g_n)
    spec = ModelSpec(n_regions=g_n, n_times=t_n, trend_mode=trend,
                     n_covariates=k)
    panel = CountPanel(
        y=rng.poisson(5.0, size=(g_n, t_n)),
        offset_log=rng.normal(0.0, 0.3, g_n),
        x=rng.normal(size=(g_n, t_n, k)) if k else None,
    )
    return graph, spec, panel


def test_unconstrained_round_trip():
    graph, spec, panel = toy_setup(k=2)
    params = ParamBlock(
        gamma=[RichardsParams(0.4, 120.0, 0.8, 3.5, 2.2)],
        beta=np.array([0.3, -0.7]),
        car=CarArState(np.linspace(-1, 1, 18).reshape(6, 3), 0.55, -0.2, 1.9),
    )
    u = to_unconstrained(params, spec)
    back, log_jac = to_constrained(u, spec)
    assert back.gamma[0].b == pytest.approx(0.4, rel=1e-12)
    assert back.gamma[0].p == pytest.approx(3.5, rel=1e-12)
    np.testing.assert_allclose(back.beta, params.beta)
    assert back.car.alpha == pytest.approx(0.55, rel=1e-12)
    assert back.car.rho == pytest.approx(-0.2, rel=1e-12)
    assert back.car.tau == pytest.approx(1.9, rel=1e-12)
    np.testing.assert_allclose(back.car.phi, params.car.phi)
    # and the reverse direction
    rng = np.random.default_rng(4)
    u2 = rng.normal(size=ParamLayout(spec).dim)
    p2, _ = to_constrained(u2, spec)
    np.testing.assert_allclose(to_unconstrained(p2, spec), u2, atol=1e-10)


def test_jacobian_matches_coordinatewise_derivatives():
    # the map is coordinate-wise, so log|J| = sum of log d(theta_i)/d(u_i)
    graph, spec, panel = toy_setup(k=1)
    rng = np.random.default_rng(11)
    u = rng.normal(size=ParamLayout(spec).dim)
    _, log_jac = to_constrained(u, spec)
    eps = 1e-6
    total = 0.0
    for i in range(u.size):
        up, dn = u.copy(), u.copy()
        up[i] += eps
        dn[i] -= eps
        a, _ = to_constrained(up, spec)
        b, _ = to_constrained(dn, spec)

        def flatten(p):
            parts = [np.array([p.gamma[0].b, p.gamma[0].r, p.gamma[0].h,
                               p.gamma[0].p, p.gamma[0].s]), p.beta,
                     np.array([p.car.alpha, p.car.rho, p.car.tau]),
                     p.car.phi.reshape(-1)]
            return np.concatenate(parts)

        deriv = (flatten(a) - flatten(b)) / (2 * eps)
        total += np.log(np.abs(deriv).max())  # only the i-th entry moves
    assert log_jac == pytest.approx(total, rel=1e-5)


def test_log_likelihood_matches_scipy_poisson():
    graph, spec, panel = toy_setup(seed=3, k=1)
    rng = np.random.default_rng(5)
    u = rng.normal(scale=0.4, size=ParamLayout(spec).dim)
    params, _ = to_constrained(u, spec)
    mu = mean_matrix(params, panel, spec)
    want = poisson.logpmf(panel.y.astype(int), mu).sum()
    assert log_likelihood(params, panel, spec) == pytest.approx(want, rel=1e-12)


def test_log_likelihood_honors_observation_mask():
    graph, spec, panel = toy_setup(seed=3, k=0)
    rng = np.random.default_rng(6)
    u = rng.normal(scale=0.4, size=ParamLayout(spec).dim)
    params, _ = to_constrained(u, spec)
    full = log_likelihood(params, panel, spec)
    obs = panel.observed.copy()
    obs[1, 2] = obs[0, 5] = False
    masked_panel = panel.with_mask(obs)
    mu = mean_matrix(params, panel, spec)
    dropped = (poisson.logpmf(int(panel.y[1, 2]), mu[1, 2])
               + poisson.logpmf(int(panel.y[0, 5]), mu[0, 5]))
    assert log_likelihood(params, masked_panel, spec) == pytest.approx(
        full - dropped, rel=1e-12)


def test_fast_path_equals_reference_decomposition():
    """Evaluator lp must equal likelihood + prior + Jacobian at random points."""
    graph, spec, panel = toy_setup(seed=8, k=1)
    ev = PosteriorEvaluator(panel, spec, graph)
    rng = np.random.default_rng(17)
    for _ in range(20):
        u = rng.normal(scale=0.8, size=ev.layout.dim)
        lp, _ = ev.logp_and_grad(u)
        params, log_jac = to_constrained(u, spec)
        ref = log_likelihood(params, panel, spec) + log_prior(params, spec, graph) + log_jac
        assert lp == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("trend,formula", [
    ("common", "linearized"),
    ("common", "exact_diff"),
    ("regional", "linearized"),
    ("common", "flat"),
])
def test_gradient_matches_central_differences(trend, formula):
    graph = from_dense(TOY_W)
    spec = ModelSpec(n_regions=3, n_times=6, trend_mode=trend,
                     trend_formula=formula, n_covariates=1)
    rng = np.random.default_rng(23)
    panel = CountPanel(
        y=rng.poisson(4.0, size=(3, 6)),
        offset_log=rng.normal(0.0, 0.3, 3),
        x=rng.normal(size=(3, 6, 1)),
    )
    ev = PosteriorEvaluator(panel, spec, graph)
    step = 1e-5
    for _ in range(10):
        u = rng.normal(scale=0.5, size=ev.layout.dim)
        lp, grad = ev.logp_and_grad(u)
        for i in range(u.size):
            up, dn = u.copy(), u.copy()
            up[i] += step
            dn[i] -= step
            fd = (ev.logp_and_grad(up)[0] - ev.logp_and_grad(dn)[0]) / (2 * step)
            err = abs(grad[i] - fd) / max(1.0, abs(fd))
            assert err <= 1e-5, (trend, formula, i, err)


def test_log_posterior_and_grad_wrapper():
    graph, spec, panel = toy_setup(seed=2, k=0)
    rng = np.random.default_rng(1)
    u = rng.normal(scale=0.3, size=ParamLayout(spec).dim)
    lp, grad = log_posterior_and_grad(u, panel, spec, graph)
    ev = PosteriorEvaluator(panel, spec, graph)
    lp2, grad2 = ev.logp_and_grad(u)
    assert lp == lp2
    np.testing.assert_array_equal(grad, grad2)


def test_extreme_point_stays_finite_and_repulsive():
    # exponentials are capped: absurd points give a huge penalty, not inf/nan,
    # so step-size search can always compare Hamiltonians
    graph, spec, panel = toy_setup(seed=2, k=0)
    ev = PosteriorEvaluator(panel, spec, graph)
    u = np.zeros(ev.layout.dim)
    lp0, _ = ev.logp_and_grad(u)
    u[0] = 800.0  # log b far past any plausible scale
    lp, grad = ev.logp_and_grad(u)
    assert np.isfinite(lp)
    assert lp < lp0 - 1e100


def test_constrain_draws_matches_single_transform():
    graph, spec, panel = toy_setup(k=2, trend="regional")
    rng = np.random.default_rng(9)
    u_draws = rng.normal(scale=0.5, size=(7, ParamLayout(spec).dim))
    cd = constrain_draws(u_draws, spec)
    assert cd["b"].shape == (7, 3)
    assert cd["beta"].shape == (7, 2)
    assert cd["phi"].shape == (7, 6, 3)
    for s in (0, 3, 6):
        params, _ = to_constrained(u_draws[s], spec)
        for j, gam in enumerate(params.gamma):
            assert cd["b"][s, j] == pytest.approx(gam.b, rel=1e-14)
            assert cd["s"][s, j] == pytest.approx(gam.s, rel=1e-14)
        assert cd["alpha"][s] == pytest.approx(params.car.alpha, rel=1e-14)
        assert cd["rho"][s] == pytest.approx(params.car.rho, rel=1e-14)
        np.testing.assert_allclose(cd["phi"][s], params.car.phi)


def test_mu_and_loglik_from_draws_match_pointwise():
    graph, spec, panel = toy_setup(seed=12, k=1)
    rng = np.random.default_rng(13)
    u_draws = rng.normal(scale=0.4, size=(5, ParamLayout(spec).dim))
    cd = constrain_draws(u_draws, spec)
    mu = mu_from_draws(cd, panel, spec)
    ll = loglik_from_draws(cd, panel, spec)
    assert mu.shape == (5, 3, 6)
    assert ll.shape == (5, 3, 6)
    for s in range(5):
        params, _ = to_constrained(u_draws[s], spec)
        np.testing.assert_allclose(mu[s], mean_matrix(params, panel, spec),
                                   rtol=1e-12)
        np.testing.assert_allclose(
            ll[s], poisson.logpmf(panel.y.astype(int), mu[s]), rtol=1e-10)


def test_initial_point_is_finite_and_seeded():
    graph, spec, panel = toy_setup(seed=30, k=1)
    ev = PosteriorEvaluator(panel, spec, graph)
    for seed in range(10):
        u0 = initial_unconstrained(panel, spec, graph, np.random.default_rng(seed))
        lp, grad = ev.logp_and_grad(u0)
        assert np.isfinite(lp)
        assert np.all(np.isfinite(grad))
    a = initial_unconstrained(panel, spec, graph, np.random.default_rng(42))
    b = initial_unconstrained(panel, spec, graph, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)


def test_spec_and_panel_validation():
    with pytest.raises(ValueError):
        ModelSpec(n_regions=0, n_times=5)
    with pytest.raises(ValueError):
        ModelSpec(n_regions=3, n_times=5, trend_mode="global")
    with pytest.raises(ValueError):
        ModelSpec(n_regions=3, n_times=5, trend_formula="spline")
    with pytest.raises(ValueError):
        ModelSpec(n_regions=3, n_times=5, alpha_prior=(0.0, 1.0))
    with pytest.raises(ValueError, match="integers"):
        CountPanel(y=np.array([[1.5, 2.0]]), offset_log=np.zeros(1))
    with pytest.raises(ValueError, match="nonnegative"):
        CountPanel(y=np.array([[-1, 2]]), offset_log=np.zeros(1))
    with pytest.raises(ValueError, match="offset_log"):
        CountPanel(y=np.array([[1, 2]]), offset_log=np.zeros(3))


def test_peak_prior_defaults_track_window():
    spec = ModelSpec(n_regions=2, n_times=20)
    mean, sd = spec.peak_prior()
    assert mean == 10.0
    assert sd == pytest.approx(20.0 / 3.92)
    spec2 = ModelSpec(n_regions=2, n_times=20, peak_mean=5.0, peak_sd=2.0)
    assert spec2.peak_prior() == (5.0, 2.0)


def test_regional_trend_uses_one_curve_per_region():
    graph, spec, panel = toy_setup(k=0, trend="regional")
    rng = np.random.default_rng(3)
    u = rng.normal(scale=0.3, size=ParamLayout(spec).dim)
    params, _ = to_constrained(u, spec)
    mu = mean_matrix(params, panel, spec)
    # altering region 2's curve must leave other regions' means unchanged
    gam = list(params.gamma)
    gam[1] = RichardsParams(gam[1].b * 2.0, gam[1].r, gam[1].h, gam[1].p, gam[1].s)
    mu2 = mean_matrix(ParamBlock(gamma=gam, beta=params.beta, car=params.car),
                      panel, spec)
    assert np.all(mu2[1] != mu[1])
    np.testing.assert_array_equal(mu2[0], mu[0])
    np.testing.assert_array_equal(mu2[2], mu[2])
