import json

import numpy as np
import pytest

from sbvar.model import (
    InvalidSpecError, NoiseSpec, PiecewiseVarSpec, TimeSeries, builtin_scenario, companion,
    load_spec, one_off_diagonal, read_csv, save_spec, simulate, spec_from_dict, spec_to_dict,
    spectral_radius, validate_spec, write_csv,
)


def lyapunov_fixed_point(phi, sigma, iters=5000):
    """Gamma = phi Gamma phi' + sigma by plain iteration."""
    g = sigma.copy()
    for _ in range(iters):
        g_new = phi @ g @ phi.T + sigma
        if np.max(np.abs(g_new - g)) < 1e-15:
            break
        g = g_new
    return g


def test_scenario1_valid_with_stable_segments():
    s = validate_spec(builtin_scenario(1))
    assert len(s.spectral_radii) == 3
    assert all(r < 1 for r in s.spectral_radii)
    # nilpotent superdiagonal: every eigenvalue is zero
    assert max(s.spectral_radii) == pytest.approx(0.0, abs=1e-6)
    assert s.total_sparsity == 3 * 19
    assert s.max_abs_coeff == 0.8
    assert s.min_spacing == 100


def test_unit_root_rejected():
    spec = PiecewiseVarSpec(50, 3, 1, [], [np.eye(3)])
    with pytest.raises(InvalidSpecError, match="spectral radius"):
        validate_spec(spec)


def test_non_strict_breaks_rejected():
    spec = PiecewiseVarSpec(300, 2, 1, [100, 100], [np.zeros((2, 2))] * 3)
    with pytest.raises(InvalidSpecError, match="strictly increasing"):
        validate_spec(spec)


def test_bad_noise_and_shape_listed_together():
    spec = PiecewiseVarSpec(50, 2, 1, [], [np.zeros((3, 3))], NoiseSpec("ar1_profile", 0.01, 1.5))
    with pytest.raises(InvalidSpecError) as err:
        validate_spec(spec)
    assert len(err.value.violations) == 2


@pytest.mark.parametrize("sid,T,p,breaks", [(1, 300, 20, [100, 200]), (2, 300, 20, [50, 250]),
                                            (3, 80, 100, [40]), (4, 300, 20, [100, 200]),
                                            (5, 300, 20, [100, 200])])
def test_builtin_shapes(sid, T, p, breaks):
    spec = builtin_scenario(sid)
    assert (spec.T, spec.p, spec.q, spec.breaks) == (T, p, 1, breaks)
    assert all(r < 1 for r in validate_spec(spec).spectral_radii)


def test_scenario3_uses_first_two_values():
    spec = builtin_scenario(3)
    assert spec.segment_coeffs[0][0, 1] == -0.6
    assert spec.segment_coeffs[1][0, 1] == 0.75


def test_scenario4_generator_properties():
    spec = builtin_scenario(4)
    for block in spec.segment_coeffs:
        nz = block[block != 0]
        assert len(nz) == 20  # ceil(0.05 * 400)
        assert np.all(np.diag(block) == 0)
        assert np.all((np.abs(nz) >= 0.5) & (np.abs(nz) <= 0.9))
        assert spectral_radius(block, 1) <= 0.95
    assert builtin_scenario(4).segment_coeffs[1].tolist() == spec.segment_coeffs[1].tolist()


def test_scenario5_noise_profile():
    cov = builtin_scenario(5).noise.covariance(20)
    assert cov[0, 0] == pytest.approx(0.01)
    assert cov[2, 5] == pytest.approx(0.01 * 0.5**3)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        builtin_scenario(9)


def test_companion_q2():
    block = np.hstack([0.5 * np.eye(2), 0.2 * np.eye(2)])
    c = companion(block, 2)
    assert c.shape == (4, 4)
    # roots of z^2 - 0.5 z - 0.2
    expected = max(abs(np.roots([1, -0.5, -0.2])))
    assert spectral_radius(block, 2) == pytest.approx(expected)


def test_simulate_deterministic_and_seed_dependent():
    spec = builtin_scenario(1)
    a, b, c = simulate(spec, 1), simulate(spec, 1), simulate(spec, 2)
    assert a.values.shape == (300, 20)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_pure_noise_moments():
    T = 10_000
    spec = PiecewiseVarSpec(T, 3, 1, [], [np.zeros((3, 3))], NoiseSpec("diagonal", 0.01))
    y = simulate(spec, 5).values
    var = y.var(axis=0)
    # SE of a sample variance of N(0, s2) is s2 * sqrt(2/T)
    assert np.all(np.abs(var - 0.01) <= 3 * 0.01 * np.sqrt(2 / T))
    yc = y - y.mean(axis=0)
    for lag in (1, 2, 5):
        acf = (yc[lag:] * yc[:-lag]).sum(axis=0) / (yc**2).sum(axis=0)
        assert np.all(np.abs(acf) <= 4 / np.sqrt(T))


def test_lyapunov_oracle_covariance():
    phi = np.array([[0.5, 0.2, 0.0], [0.0, -0.4, 0.3], [0.1, 0.0, 0.6]])
    sigma = NoiseSpec("ar1_profile", 0.01, 0.5).covariance(3)
    spec = PiecewiseVarSpec(50_000, 3, 1, [], [phi], NoiseSpec("ar1_profile", 0.01, 0.5))
    y = simulate(spec, 11).values
    sample = np.cov(y.T, bias=True)
    gamma = lyapunov_fixed_point(phi, sigma)
    assert np.linalg.norm(sample - gamma) / np.linalg.norm(gamma) < 0.05


def test_continuity_across_breaks():
    # a break to the zero matrix: y_t is pure noise from t = 30 on, y_29 is not
    spec = PiecewiseVarSpec(60, 2, 1, [30], [0.9 * np.eye(2), np.zeros((2, 2))], NoiseSpec("diagonal", 1e-6))
    y = simulate(spec, 0).values
    z_scale = 1e-3
    assert np.all(np.abs(y[29:]) < 6 * z_scale)


def test_spec_roundtrip(tmp_path):
    spec = builtin_scenario(5)
    save_spec(spec, tmp_path / "s.json")
    back = load_spec(tmp_path / "s.json")
    assert back.breaks == spec.breaks
    assert back.noise == spec.noise
    for a, b in zip(back.segment_coeffs, spec.segment_coeffs):
        assert np.array_equal(a, b)


def test_spec_pattern_records():
    d = {"T": 100, "p": 5, "q": 2, "breaks": [50],
         "segment_coeffs": [{"kind": "one_off_diagonal", "value": 0.3},
                            {"kind": "random_sparse", "density": 0.1, "seed": 4}]}
    spec = spec_from_dict(d)
    assert spec.segment_coeffs[0].shape == (5, 10)
    assert spec.segment_coeffs[0][0, 1] == 0.3
    assert np.all(spec.segment_coeffs[1][:, 5:] == 0)
    assert json.loads(json.dumps(spec_to_dict(spec)))["q"] == 2


def test_csv_roundtrip_and_header_detection(tmp_path):
    s = simulate(builtin_scenario(1), 3)
    write_csv(s, tmp_path / "a.csv")
    write_csv(s, tmp_path / "b.csv", header=False)
    a, b = read_csv(tmp_path / "a.csv"), read_csv(tmp_path / "b.csv")
    assert np.array_equal(a.values, s.values)
    assert np.array_equal(b.values, s.values)
    (tmp_path / "c.csv").write_text("1;2\n3;4\n5;6\n")
    assert read_csv(tmp_path / "c.csv", delimiter=";").values.tolist() == [[1, 2], [3, 4], [5, 6]]


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeries(np.array([[1.0, np.nan], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        TimeSeries(np.zeros((2, 3)), q=2)
    assert TimeSeries(np.arange(5.0)).p == 1


def test_one_off_diagonal_is_superdiagonal():
    m = one_off_diagonal(4, 0.75)
    assert np.count_nonzero(m) == 3
    assert m[0, 1] == m[2, 3] == 0.75
