import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splinecop.inference import PosteriorDraws
from splinecop.summaries import (
    COVERAGE_GRID,
    EVAL_GRID,
    TABLE_GRID,
    curve_estimate,
    dic,
    lambda_curve,
    posterior_functional,
    simultaneous_scale,
    study_metrics,
    weighted_quantile,
)
from splinecop.posterior import UnconditionalModel


def _naive_quantile(values, weights, q):
    pairs = sorted(zip(values, weights))
    total = sum(weights)
    acc = 0.0
    for val, w in pairs:
        acc += w
        if acc >= q * total - 1e-12:
            return val
    return pairs[-1][0]


def test_constant_functional():
    d = PosteriorDraws(np.random.default_rng(0).normal(size=(50, 3)), "metropolis")
    s = posterior_functional(d, lambda p: 2.5)
    assert s.point == pytest.approx(2.5)
    for lo, hi in s.intervals.values():
        assert lo == hi == 2.5


def test_identity_mean():
    d = PosteriorDraws(np.array([[1.0], [2.0], [3.0]]), "metropolis")
    assert posterior_functional(d, lambda p: p[0]).point == pytest.approx(2.0)


def test_functional_errors():
    d = PosteriorDraws(np.zeros((4, 1)), "metropolis")
    with pytest.raises(ValueError):
        posterior_functional(d, lambda p: np.nan)


@given(
    arrays(np.float64, 25, elements=st.floats(-10, 10)),
    arrays(np.float64, 25, elements=st.floats(0.01, 5)),
    st.floats(0.01, 0.99),
)
def test_weighted_quantile_matches_naive(values, weights, q):
    assert weighted_quantile(values, weights, q)[0] == _naive_quantile(values, weights, q)


def test_uniform_weights_equal_unweighted(rng):
    x = rng.normal(size=(400, 2))
    plain = PosteriorDraws(x, "metropolis")
    weighted = PosteriorDraws(x, "importance", weights=np.full(400, 1 / 400))
    f = lambda p: p[0] * p[1]
    a, b = posterior_functional(plain, f), posterior_functional(weighted, f)
    assert a.point == pytest.approx(b.point, rel=1e-12)
    for lev in a.intervals:
        assert a.intervals[lev] == b.intervals[lev]


def test_weighted_mean(rng):
    x = rng.normal(size=(30, 1))
    w = rng.uniform(size=30)
    w /= w.sum()
    d = PosteriorDraws(x, "importance", weights=w)
    assert posterior_functional(d, lambda p: p[0]).point == pytest.approx(float(w @ x[:, 0]), rel=1e-12)


def test_identical_draws_give_zero_width_bands():
    traj = np.tile(np.linspace(0.2, 0.7, 15), (40, 1))
    for kind in ("pointwise", "simultaneous"):
        c = curve_estimate(traj, np.full(40, 1 / 40), np.linspace(0, 1, 15), kind)
        np.testing.assert_allclose(c.point, traj[0])
        for lo, hi in c.bands.values():
            np.testing.assert_allclose(lo, traj[0])
            np.testing.assert_allclose(hi, traj[0])


def _gp_trajectories(rng, n, grid):
    cov = np.exp(-0.5 * (grid[:, None] - grid[None, :]) ** 2 / 0.15**2) + 1e-9 * np.eye(grid.size)
    L = np.linalg.cholesky(cov)
    return np.sin(3 * grid) + rng.standard_normal((n, grid.size)) @ L.T


def test_simultaneous_band_contains_pointwise(rng):
    grid = np.linspace(0, 1, 30)
    traj = _gp_trajectories(rng, 2000, grid)
    w = np.full(2000, 1 / 2000)
    pw = curve_estimate(traj, w, grid, "pointwise")
    sim = curve_estimate(traj, w, grid, "simultaneous")
    for lev in pw.bands:
        assert np.all(sim.bands[lev][0] <= pw.bands[lev][0] + 1e-15)
        assert np.all(sim.bands[lev][1] >= pw.bands[lev][1] - 1e-15)
    # nested across levels and around the mean
    assert np.all(sim.bands[0.8][1] <= sim.bands[0.95][1])
    assert np.all((sim.bands[0.95][0] <= sim.point) & (sim.point <= sim.bands[0.95][1]))


def test_simultaneous_band_trajectory_coverage(rng):
    grid = np.linspace(0, 1, 40)
    traj = _gp_trajectories(rng, 10_000, grid)
    band = curve_estimate(traj, np.full(10_000, 1e-4), grid, "simultaneous", levels=(0.95,))
    lo, hi = band.bands[0.95]
    fresh = _gp_trajectories(rng, 10_000, grid)
    inside = np.all((fresh >= lo) & (fresh <= hi), axis=1).mean()
    assert inside == pytest.approx(0.95, abs=0.01)


def test_simultaneous_scale_at_least_one(rng):
    traj = rng.normal(size=(200, 5))
    point = traj.mean(axis=0)
    lo, hi = point - 10, point + 10
    assert simultaneous_scale(traj, np.full(200, 1 / 200), point, lo, hi, 0.9) == 1.0


def test_lambda_curve_shapes(rng):
    m = UnconditionalModel()
    d = PosteriorDraws(rng.normal(size=(20, 11)) * 0.3, "metropolis")
    c = lambda_curve(d, m)
    assert c.point.shape == EVAL_GRID.shape
    assert len(c.to_records()) == EVAL_GRID.size
    single = m.lam(d.draws[3], EVAL_GRID)
    np.testing.assert_allclose(m.lam(d.draws, EVAL_GRID)[3], single, rtol=1e-14)


def test_band_kind_validated():
    with pytest.raises(ValueError):
        curve_estimate(np.zeros((2, 3)), np.full(2, 0.5), np.arange(3), "hybrid")


# -- DIC ---------------------------------------------------------------------------------


def test_dic_degenerate_chain():
    loglik = lambda p: -float(np.sum(p**2)) - 3.0
    chain = PosteriorDraws(np.tile([0.5, -1.0], (100, 1)), "metropolis")
    rec = dic(chain, loglik)
    assert rec.effective_dim == pytest.approx(0.0, abs=1e-12)
    assert rec.dic == pytest.approx(-2 * loglik(np.array([0.5, -1.0])))


def test_dic_gaussian_effective_dimension(rng):
    d = 4
    draws = rng.standard_normal((50_000, d))
    loglik = lambda p: -0.5 * float(p @ p)
    rec = dic(PosteriorDraws(draws, "metropolis"), loglik)
    assert rec.effective_dim == pytest.approx(d, rel=0.1)


def test_dic_rejects_weighted_draws():
    d = PosteriorDraws(np.zeros((2, 1)), "importance", weights=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        dic(d, lambda p: 0.0)


# -- study metrics --------------------------------------------------------------------------


def _truth():
    return EVAL_GRID * np.log(EVAL_GRID) / 2


def test_exact_estimates_give_zero_error():
    truth = _truth()
    est = np.tile(truth, (5, 1))
    rep = study_metrics(est, truth, intervals={0.9: (est - 0.01, est + 0.01)})
    assert np.all(rep.bias == 0) and np.all(rep.rmse == 0) and rep.rmise == 0
    assert rep.coverage[0.9] == 1.0
    assert rep.grid.tolist() == TABLE_GRID.tolist()


def test_symmetric_errors():
    truth = _truth()
    e = 0.02
    rep = study_metrics(np.vstack([truth + e, truth - e]), truth)
    np.testing.assert_allclose(rep.bias, 0, atol=1e-15)
    np.testing.assert_allclose(rep.rmse, e, rtol=1e-12)
    assert rep.rmise == pytest.approx(e * np.sqrt(EVAL_GRID[-1] - EVAL_GRID[0]), rel=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**31))
def test_rmse_bounds_bias_and_reordering(seed):
    rng = np.random.default_rng(seed)
    truth = _truth()
    est = truth + rng.normal(0.01, 0.03, (8, truth.size))
    lo, hi = est - 0.03, est + 0.03
    rep = study_metrics(est, truth, intervals={0.8: (lo, hi)})
    assert np.all(rep.rmse >= np.abs(rep.bias) - 1e-15)
    assert 0 <= rep.coverage[0.8] <= 1
    perm = rng.permutation(8)
    again = study_metrics(est[perm], truth, intervals={0.8: (lo[perm], hi[perm])})
    assert again.coverage == rep.coverage
    np.testing.assert_allclose(again.rmse, rep.rmse, rtol=1e-14)


def test_coverage_grid_reordering():
    truth = _truth()
    rng = np.random.default_rng(1)
    est = truth + rng.normal(0, 0.02, (6, truth.size))
    ints = {0.9: (est - 0.02, est + 0.02)}
    perm = rng.permutation(truth.size)
    a = study_metrics(est, truth, intervals=ints)
    b = study_metrics(
        est[:, perm], truth[perm], grid=EVAL_GRID[perm], intervals={0.9: (ints[0.9][0][:, perm], ints[0.9][1][:, perm])},
        coverage_grid=COVERAGE_GRID[::-1],
    )
    assert a.coverage[0.9] == pytest.approx(b.coverage[0.9], abs=1e-15)
    assert a.rmise == pytest.approx(b.rmise, rel=1e-12)


def test_study_metrics_shape_errors():
    truth = _truth()
    with pytest.raises(ValueError):
        study_metrics(np.zeros((1, truth.size)), truth)
    with pytest.raises(ValueError):
        study_metrics(np.zeros((3, 5)), truth)
