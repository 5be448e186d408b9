import numpy as np
import pytest

from sbvar.estimation import (
    StationaryIntervals, bic, default_rho_grid, select_rho, stage3_fit, stationary_intervals,
)
from sbvar.metrics import support_rates
from sbvar.model import NoiseSpec, PiecewiseVarSpec, TimeSeries, builtin_scenario, simulate
from sbvar.pipeline import global_scale
from sbvar.solver import lagged_design, lasso_fit


def scaled(series, target=0.4):
    return TimeSeries(series.values / global_scale(series.values) * target, q=series.q)


def test_intervals_arithmetic():
    iv = stationary_intervals([100, 200], 10, 300, 1)
    assert iv.intervals == [(1, 89), (111, 189), (211, 300)]
    assert iv.lengths == [88, 78, 89]
    assert iv.total_length == 255


def test_no_breaks_single_interval():
    iv = stationary_intervals([], 35, 300, 1)
    assert iv.intervals == [(1, 300)]


def test_middle_interval_dropped(caplog):
    iv = stationary_intervals([100, 120], 15, 300, 1)
    assert iv.intervals == [(1, 84), (136, 300)]
    assert "too short" in caplog.text


def test_all_intervals_removed():
    with pytest.raises(ValueError, match="no usable interval"):
        stationary_intervals([40], 45, 80, 1)
    with pytest.raises(ValueError):
        stationary_intervals([40], -1, 80, 1)


def test_rows_stay_inside_interval():
    q = 2
    iv = stationary_intervals([100, 200], 10, 300, q)
    for j, (s, e) in enumerate(iv.intervals):
        rows = iv.rows(j)
        # every lag t-1..t-q of every response t lies in [s, e]
        assert rows.min() - q >= s and rows.max() <= e


def test_zero_series_gives_zero_model():
    z = TimeSeries(np.zeros((100, 3)))
    m = stage3_fit(z, stationary_intervals([50], 5, 100, 1), 0.1)
    assert all(np.all(seg.coef == 0) for seg in m.segments)


def test_rho_zero_matches_least_squares():
    spec = builtin_scenario(1)
    s = simulate(spec, 2)
    iv = StationaryIntervals([(1, 100)], 0, 1)
    m = stage3_fit(s, iv, 0.0)
    X, Y = lagged_design(s.values[:100], 1)
    ls = np.linalg.solve(X.T @ X, X.T @ Y)
    assert np.allclose(m.segments[0].coef, ls.T, rtol=1e-6, atol=1e-8)


def test_block_independence_shared_normalisation():
    s = scaled(simulate(builtin_scenario(1), 4))
    iv = stationary_intervals([100, 200], 10, 300, 1)
    rho = 0.05
    m = stage3_fit(s, iv, rho)
    N = sum(len(iv.rows(j)) for j in range(3))
    X, Y = lagged_design(s.values, 1)
    for j in range(3):
        rows = iv.rows(j) - 2
        # one interval alone with its share of N: rho_j = rho * N / N_j
        ref = lasso_fit(X[rows], Y[rows], rho * N / len(rows), tol=1e-12)
        assert np.allclose(m.segments[j].coef, ref.coefficients.T, atol=1e-7)


def test_residual_covariance_psd():
    s = scaled(simulate(builtin_scenario(5), 1))
    rho, m, trace = select_rho(s, stationary_intervals([100, 200], 35, 300, 1))
    for seg in m.segments:
        assert np.allclose(seg.resid_cov, seg.resid_cov.T)
        assert np.linalg.eigvalsh(seg.resid_cov).min() > -1e-12
    assert len(trace) == 20
    assert rho in [r for r, _ in trace]
    assert min(trace, key=lambda kv: kv[1])[0] == rho


def test_single_grid_point():
    s = scaled(simulate(builtin_scenario(1), 1))
    rho, _, _ = select_rho(s, stationary_intervals([100, 200], 35, 300, 1), [0.07])
    assert rho == 0.07
    with pytest.raises(ValueError):
        select_rho(s, stationary_intervals([], 0, 300, 1), [])


def test_pure_noise_selects_empty_model():
    spec = PiecewiseVarSpec(300, 5, 1, [], [np.zeros((5, 5))], NoiseSpec("diagonal", 1.0))
    s = simulate(spec, 8)
    _, m, _ = select_rho(s, stationary_intervals([], 0, 300, 1))
    assert sum(np.count_nonzero(seg.coef) for seg in m.segments) == 0


def test_true_breaks_support_recovery():
    spec = builtin_scenario(1)
    s = scaled(simulate(spec, 5))
    _, m, _ = select_rho(s, stationary_intervals(spec.breaks, 35, 300, 1))
    tpr, fpr = support_rates(m, spec)
    assert tpr >= 0.9 and fpr <= 0.1
    # the short middle interval is shrunk hardest under the shared 1/N scaling
    mid = np.diag(m.segments[1].coef, k=1)
    assert np.all(mid >= 0) and np.mean(mid > 0) >= 0.8 and np.all(mid < 0.75 + 0.2)
    last = np.diag(m.segments[2].coef, k=1)
    assert np.mean(last) == pytest.approx(-0.8, abs=0.25)


def test_bic_modes_high_dimension():
    spec = builtin_scenario(3)
    s = scaled(simulate(spec, 1))
    iv = stationary_intervals([40], 0, 80, 1)
    grid = default_rho_grid(iv, 100)
    for rho in grid:
        m = stage3_fit(s, iv, rho)
        assert np.isfinite(bic(m, iv, "diagonal"))
    assert bic(stage3_fit(s, iv, grid[0]), iv, "full") == -np.inf
    with pytest.raises(ValueError):
        bic(m, iv, "trace")


def test_resid_cov_uses_original_units():
    spec = builtin_scenario(1)
    s = simulate(spec, 5)
    iv = stationary_intervals(spec.breaks, 35, 300, 1)
    _, a, _ = select_rho(s, iv)
    big = TimeSeries(s.values * 10)
    _, b, _ = select_rho(big, iv, np.asarray([r for r, _ in a.bic_trace]) * 100)
    assert np.allclose(b.segments[0].resid_cov, a.segments[0].resid_cov * 100, rtol=1e-6)


def test_support_recovery_with_known_breaks_desk_scale():
    from sbvar.pipeline import detect

    spec = builtin_scenario(1)
    rates = [support_rates(detect(simulate(spec, seed), known_breaks=spec.breaks).model, spec)
             for seed in range(1, 11)]
    tpr, fpr = np.mean(rates, axis=0)
    assert tpr >= 0.95
    assert fpr <= 0.05
