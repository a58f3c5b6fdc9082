import warnings

import numpy as np
import pytest

from spdefem import (
    AlignmentError,
    BoundaryConditions,
    DegenerateWeightsError,
    FiniteElementModel,
    InnerBiasWarning,
    NotNegativeDefiniteError,
    PathSample,
    Potential,
    TvEstimator,
    ValidationError,
    covariance,
    estimate_logZ,
    estimate_tv_conditional,
    estimate_tv_upper,
    fit_loglog_slope,
    hat_embed,
    index_set,
    project,
)

from conftest import sample_cov_se, zscore

DD = BoundaryConditions.dirichlet()
RR = BoundaryConditions(1, 1, 1, 1)
DL = BoundaryConditions(1, 0, 0, 1)
HALF_SQUARE = Potential.quadratic(1.0)


def shifted(pot, c):
    return Potential(lambda v: pot.F(v) + c, pot.f, pot.F_second_bound, pot.F_upper_bound + c)


def test_project_examples():
    grid = index_set(RR, 4)
    assert np.all(project(PathSample.on_grid(np.full(17, 2.5)), grid) == 2.5)
    u = np.arange(5.0)
    np.testing.assert_array_equal(project(PathSample.on_grid(u), grid), u)
    lin = PathSample.on_grid(np.linspace(0, 1, 9))
    np.testing.assert_allclose(project(lin, index_set(DD, 4)), [0.25, 0.5, 0.75])
    with pytest.raises(AlignmentError):
        project(PathSample.on_grid(np.zeros(6)), grid)


def test_hat_embed_single_cell_is_interpolation(rng):
    grid = index_set(DD, 4)
    u = rng.standard_normal(3)
    path = hat_embed(u, grid, 1, rng)
    np.testing.assert_array_equal(path.values, [0.0, *u, 0.0])


def test_hat_embed_keeps_nodes(rng):
    grid = index_set(DL, 5)
    u = rng.standard_normal((4, grid.size))
    path = hat_embed(u, grid, 8, rng)
    assert path.values.shape == (4, 41)
    np.testing.assert_array_equal(project(path, grid), u)
    assert np.all(path.values[:, 0] == 0)


def test_hat_embed_bridge_variance(rng):
    grid = index_set(RR, 4)
    u = np.zeros((100_000, grid.size))
    mid = hat_embed(u, grid, 2, rng).values[:, 1]
    se = np.std(mid**2, ddof=1) / np.sqrt(len(mid))
    assert zscore(np.mean(mid**2), grid.dx / 4, se) < 4


def test_hat_embed_antithetic_pairs(rng):
    grid = index_set(RR, 3)
    u = np.broadcast_to(rng.standard_normal(grid.size), (2, 4, grid.size))
    v = hat_embed(u, grid, 6, rng, antithetic=True).values
    interp = np.interp(np.linspace(0, 1, 19), np.linspace(0, 1, 4), u[0, 0])
    np.testing.assert_allclose(v[:, :2] + v[:, 2:], np.broadcast_to(2 * interp, (2, 2, 19)), atol=1e-12)
    with pytest.raises(ValidationError):
        hat_embed(np.zeros((3, grid.size)), grid, 4, rng, antithetic=True)


@pytest.mark.parametrize("bc", [DD, RR, DL])
def test_hat_embedding_reproduces_continuum_covariance(bc):
    rng = np.random.default_rng(31)
    n, per = 4, 8
    model = FiniteElementModel(bc, n)
    paths = hat_embed(model.sample_nu_n(rng, 100_000), model.grid, per, rng).values
    probes = np.array([1, 3, 6, 10, 13, 19, 22, 29])  # off-node indices on the 32-cell grid
    cov, se = sample_cov_se(paths[:, probes])
    x = probes / (n * per)
    assert np.all(zscore(cov, covariance(bc, x[:, None], x[None, :]), se) < 5)


def test_logZ_trivial(rng):
    for which in ("continuum", 8):
        assert estimate_logZ(RR, Potential.zero(), which, 100, rng).logZ == 0.0
        assert estimate_logZ(RR, Potential.const(1.7), which, 100, rng).logZ == 1.7
        # a constant not flagged as such still cancels up to rounding
        est = estimate_logZ(RR, shifted(Potential.zero(), 1.7), which, 100, rng)
        assert est.logZ == pytest.approx(1.7, abs=1e-14) and est.std_error == pytest.approx(0, abs=1e-14)


def test_logZ_gaussian_dirichlet_two(rng):
    # one hat function, int phi^2 = 1/3, so F_n(x) = -x^2 / 6 with x ~ N(0, 1/4)
    est = estimate_logZ(DD, HALF_SQUARE, 2, 100_000, rng)
    assert zscore(est.logZ, -0.5 * np.log(1 + 1 / 12), est.std_error) < 4


@pytest.mark.parametrize("bc", [RR, DL])
def test_logZ_gaussian_determinant(bc):
    # E exp(-x^T M x / 2) under N(0, (-L)^{-1}) is det(I + M (-L)^{-1})^{-1/2}
    rng = np.random.default_rng(5)
    model = FiniteElementModel(bc, 6)
    eye = np.eye(model.grid.size)
    exact = -0.5 * np.linalg.slogdet(eye + model.M.to_dense() @ model.nu_n_covariance())[1]
    est = estimate_logZ(bc, HALF_SQUARE, 6, 100_000, rng)
    assert zscore(est.logZ, exact, est.std_error) < 4


def test_logZ_continuum_bridge(rng):
    # E exp(-1/2 int_0^1 B^2) for a Brownian bridge is (1 / sinh 1)^{1/2}
    est = estimate_logZ(DD, HALF_SQUARE, "continuum", 50_000, rng, m_fine=256)
    assert zscore(est.logZ, -0.5 * np.log(np.sinh(1.0)), est.std_error) < 4


def test_logZ_degenerate(rng):
    steep = Potential(lambda v: 400.0 * np.asarray(v), lambda v: np.full(np.shape(v), 400.0), 0.0, 1e300)
    with pytest.raises(DegenerateWeightsError):
        estimate_logZ(RR, steep, 8, 1000, rng)


def test_logZ_validation(rng):
    with pytest.raises(NotNegativeDefiniteError):
        estimate_logZ(BoundaryConditions(-3, 1, -3, 1), HALF_SQUARE, 4, 100, rng)
    with pytest.raises(ValidationError):
        estimate_logZ(RR, HALF_SQUARE, "discrete", 100, rng)


@pytest.mark.parametrize("pot", [Potential.zero(), Potential.const(-2.0), shifted(Potential.zero(), 0.8)])
def test_tv_zero_for_constant_potentials(pot, rng):
    up = estimate_tv_upper(DD, pot, 4, 500, rng)
    assert up.value == 0.0 and up.estimator is TvEstimator.UPPER_BOUND
    cond = estimate_tv_conditional(RR, pot, 4, 200, 4, rng)
    assert cond.value == 0.0 and cond.estimator is TvEstimator.CONDITIONAL


def test_tv_shift_invariance():
    a = estimate_tv_upper(DD, Potential.neg_cos(), 8, 20_000, np.random.default_rng(1))
    b = estimate_tv_upper(DD, shifted(Potential.neg_cos(), 3.0), 8, 20_000, np.random.default_rng(2))
    assert abs(a.value - b.value) <= 3 * np.hypot(a.std_error, b.std_error)
    c = estimate_tv_upper(DD, shifted(Potential.neg_cos(), 3.0), 8, 20_000, np.random.default_rng(1))
    assert c.value == pytest.approx(a.value, rel=1e-9)


def test_tv_alignment(rng):
    with pytest.raises(AlignmentError):
        estimate_tv_upper(DD, Potential.neg_cos(), 8, 100, rng, m_fine=60)
    with pytest.raises(ValidationError):
        estimate_tv_conditional(DD, Potential.neg_cos(), 8, 100, 1, rng)


def test_conditional_inner_consistency_and_ordering():
    pot = Potential.neg_cos()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InnerBiasWarning)
        c32 = estimate_tv_conditional(DD, pot, 8, 2000, 32, np.random.default_rng(3))
        c64 = estimate_tv_conditional(DD, pot, 8, 2000, 64, np.random.default_rng(4))
    assert abs(c32.value - c64.value) <= 3 * np.hypot(c32.std_error, c64.std_error)
    up = estimate_tv_upper(DD, pot, 8, 20_000, np.random.default_rng(5))
    assert c64.value <= up.value + 3 * np.hypot(c64.std_error, up.std_error)
    assert c64.inner_shift is not None and c64.n_inner == 64


def test_inner_bias_warning_fires():
    with pytest.warns(InnerBiasWarning):
        estimate_tv_conditional(DD, Potential.neg_cos(), 4, 4000, 2, np.random.default_rng(6), antithetic=False)


def test_slope_fit_exact_power_law():
    ns = np.array([4, 8, 16, 32])
    fit = fit_loglog_slope(ns, 3.0 / ns, 0.01 * 3.0 / ns)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.ci_low <= -1.0 <= fit.ci_high
    assert fit_loglog_slope(ns, np.zeros(4)) is None


def test_slope_fit_interval_covers_noisy_truth():
    rng = np.random.default_rng(0)
    ns = np.array([4, 8, 16, 32, 64])
    covered = 0
    for _ in range(200):
        vals = ns**-1.0 * np.exp(0.05 * rng.standard_normal(5))
        fit = fit_loglog_slope(ns, vals, 0.05 * vals)
        covered += fit.ci_low <= -1.0 <= fit.ci_high
    assert covered >= 180


@pytest.mark.parametrize("bc", [DD, RR])
@pytest.mark.parametrize("pot", [Potential.neg_cos(), HALF_SQUARE, Potential.neg_logcosh()],
                         ids=["neg-cos", "neg-half-square", "neg-logcosh"])
def test_rate_reproduction(bc, pot):
    ns = [4, 8, 16, 32]
    est = [estimate_tv_upper(bc, pot, n, 10_000, np.random.default_rng(100 + n)) for n in ns]
    fit = fit_loglog_slope(ns, [e.value for e in est], [e.std_error for e in est])
    assert -1.5 <= fit.slope <= -0.6
