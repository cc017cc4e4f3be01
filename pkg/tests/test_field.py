import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphere_fheat import fbm_kernel as fk
from sphere_fheat.errors import DomainError
from sphere_fheat.harmonics import SphericalPoint, mode_degrees, mode_index, n_modes, rotation_matrix
from sphere_fheat.field import (
    FieldGrid,
    evaluate_field,
    field_covariance,
    fractional_smoothing,
    laplace_beltrami,
    load_field_npz,
    mode_covariances,
    noise_covariance,
    point_increment_variance,
    point_time_covariance,
    ring_mode_variances,
    sample_equator,
    sample_time_paths,
    save_field_npz,
    smoothing_multiplier,
    write_field_csv,
)
from sphere_fheat.spectral_sampler import (
    CoefficientPathSet,
    ModelParams,
    TimeGrid,
    sample_all,
    sample_noise_coefficients,
)


def single_mode(L, l, m, c, times=(1.0,)):
    v = np.zeros((1, n_modes(L), len(times)), complex)
    v[0, mode_index(l, m)] = c
    return CoefficientPathSet(v, np.asarray(times), L)


def random_coeffs(L, seed, n_times=1, R=1):
    rng = np.random.default_rng(seed)
    M = n_modes(L)
    v = rng.standard_normal((R, M, n_times)) + 1j * rng.standard_normal((R, M, n_times))
    _, ms = mode_degrees(L)
    v[:, ms == 0] = v[:, ms == 0].real
    return CoefficientPathSet(v, np.linspace(0.1, 1.0, n_times), L)


def random_grid(n, seed):
    rng = np.random.default_rng(seed)
    return FieldGrid(rng.uniform(0, math.pi, n), rng.uniform(0, 2 * math.pi, n))


# ---- synthesis ---------------------------------------------------------------------------


def test_zero_coefficients_zero_field():
    c = CoefficientPathSet(np.zeros((2, n_modes(4), 3)), [0.1, 0.2, 0.3], 4)
    f = evaluate_field(c, random_grid(7, 0))
    assert f.values.shape == (2, 3, 7)
    assert np.all(f.values == 0)


def test_constant_mode():
    f = evaluate_field(single_mode(3, 0, 0, 2.5), random_grid(5, 1))
    np.testing.assert_allclose(f.values, 2.5 / math.sqrt(4 * math.pi), rtol=1e-14)


def test_ring_synthesis_matches_direct():
    c = random_coeffs(10, 2, n_times=2, R=2)
    ring = FieldGrid.ring_grid([0.3, 1.2, 2.9], 32)
    plain = FieldGrid(ring.colatitude, ring.longitude)
    a = evaluate_field(c, ring).values
    b = evaluate_field(c, plain).values
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_field_is_real_and_linear():
    a, b = random_coeffs(6, 3), random_coeffs(6, 4)
    g = random_grid(9, 5)
    lhs = evaluate_field(a + b * 2.0, g).values
    rhs = evaluate_field(a, g).values + 2 * evaluate_field(b, g).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# ---- spectral operators -------------------------------------------------------------------


def test_laplacian_examples():
    c = laplace_beltrami(single_mode(2, 1, 0, 1.5))
    assert c.values[0, mode_index(1, 0), 0] == pytest.approx(-3.0)
    twice = laplace_beltrami(laplace_beltrami(single_mode(4, 3, 2, 1.0)))
    assert twice.values[0, mode_index(3, 2), 0] == pytest.approx(144.0)


def test_laplacian_finite_difference():
    L = 6
    c = random_coeffs(L, 7)
    lap = laplace_beltrami(c)
    h = 1e-3
    for th, ph in ((0.7, 1.1), (1.9, 4.0), (2.4, 0.3)):
        g = FieldGrid([th, th + h, th - h, th, th], [ph, ph, ph, ph + h, ph - h])
        f = evaluate_field(c, g).values[0, 0]
        d_th = (math.sin(th + h / 2) * (f[1] - f[0]) - math.sin(th - h / 2) * (f[0] - f[2])) / (h * h * math.sin(th))
        d_ph = (f[3] - 2 * f[0] + f[4]) / (h * h * math.sin(th) ** 2)
        ref = evaluate_field(lap, FieldGrid([th], [ph])).values[0, 0, 0]
        assert d_th + d_ph == pytest.approx(ref, rel=1e-4, abs=1e-4)


def test_fractional_smoothing_examples():
    c = fractional_smoothing(single_mode(2, 1, 1, 1.0), 2.0)
    assert c.values[0, mode_index(1, 1), 0] == pytest.approx(3.0)
    d = random_coeffs(5, 8)
    back = fractional_smoothing(fractional_smoothing(d, -2.0), 2.0)
    np.testing.assert_allclose(back.values, d.values, rtol=1e-14)
    assert smoothing_multiplier(0, 3.7) == 1.0


# ---- analytic covariances ------------------------------------------------------------------


def test_field_covariance_rotation_invariant():
    p = ModelParams(hurst=0.7, alpha=1.5, L=12, d0=0.5)
    x, y = SphericalPoint(0.4, 1.0), SphericalPoint(2.0, 5.1)
    R = rotation_matrix([0.3, -1.0, 0.8], 1.234)
    xr = SphericalPoint.from_vector(R @ x.unit_vector)
    yr = SphericalPoint.from_vector(R @ y.unit_vector)
    a = field_covariance(p, 0.5, 0.8, x, y)
    b = field_covariance(p, 0.5, 0.8, xr, yr)
    assert abs(a - b) <= 1e-10 * abs(field_covariance(p, 0.5, 0.8, x, x))


def test_field_variance_monte_carlo():
    p = ModelParams(hurst=0.75, alpha=1.0, L=4, d0=1.0)
    paths = sample_all(p, TimeGrid([0.5]), 2024, 10_000)
    x = SphericalPoint(1.0, 2.0)
    v = evaluate_field(paths, FieldGrid.from_points([x])).values[:, 0, 0]
    ref = field_covariance(p, 0.5, 0.5, x, x)
    assert abs(np.mean(v**2) / ref - 1) < 0.05


def test_noise_covariance_examples():
    p = ModelParams(hurst=0.75, alpha=3.0, L=6)
    x, y = SphericalPoint(0.5, 0.1), SphericalPoint(1.5, 2.0)
    assert noise_covariance(p, 0.7, 0.0, x, y) == 0.0
    lam = noise_covariance(p, 1.0, 1.0, x, y)
    assert noise_covariance(p, 0.5, 1.0, x, y) == pytest.approx(fk.r_cov(0.5, 1.0, p.conv) * lam, rel=1e-14)
    with pytest.raises(DomainError):
        noise_covariance(ModelParams(hurst=0.75, alpha=2.0, L=6), 1.0, 1.0, x, y)


def test_noise_covariance_monte_carlo():
    p = ModelParams(hurst=0.75, alpha=3.0, L=6)
    x = SphericalPoint(0.9, 0.4)
    w = sample_noise_coefficients(p, TimeGrid([0.5, 1.0]), 99, 10_000)
    f = evaluate_field(w, FieldGrid.from_points([x])).values[:, :, 0]
    for i, j, t, s in ((1, 1, 1.0, 1.0), (0, 1, 0.5, 1.0)):
        ref = noise_covariance(p, t, s, x, x)
        assert abs(np.mean(f[:, i] * f[:, j]) / ref - 1) < 0.05


def test_mode_covariances_plateau():
    p = ModelParams(hurst=0.75, alpha=1.0, L=8)
    a = mode_covariances(p, 10.0, 10.0)[1:]
    b = mode_covariances(p, 20.0, 20.0)[1:]
    np.testing.assert_allclose(a, b, rtol=1e-6)


def test_point_time_covariance_matches_field_covariance():
    p = ModelParams(hurst=0.7, alpha=2.0, L=64, d0=0.5)
    times = [0.2, 0.5, 1.0]
    A = point_time_covariance(p, times).matrix
    x = SphericalPoint(1.0, 0.0)
    for i, t in enumerate(times):
        for j, s in enumerate(times):
            assert A[i, j] == pytest.approx(field_covariance(p, t, s, x, x), rel=1e-8)


def test_increment_variance_matches_covariance():
    p = ModelParams(hurst=0.75, alpha=2.0, L=64)
    t, r = 0.5, 0.1
    A = point_time_covariance(p, [t, t + r]).matrix
    v = point_increment_variance(p, t, [0.0, r])
    assert v[0] == 0.0
    assert v[1] == pytest.approx(A[0, 0] + A[1, 1] - 2 * A[0, 1], rel=1e-7)


def test_time_path_samples_have_model_variance():
    p = ModelParams(hurst=0.75, alpha=2.0, L=16)
    u = sample_time_paths(p, [0.5, 1.0], 5, 10_000)
    A = point_time_covariance(p, [0.5, 1.0]).matrix
    assert abs(np.mean(u[:, 1] ** 2) / A[1, 1] - 1) < 0.05


# ---- equator ------------------------------------------------------------------------------------


def test_ring_variances_sum_to_point_variance():
    p = ModelParams(hurst=0.7, alpha=1.5, L=20, d0=1.0)
    V = ring_mode_variances(p, 0.4)
    x = SphericalPoint(math.pi / 2, 0.0)
    assert V[0] + 2 * V[1:].sum() == pytest.approx(field_covariance(p, 0.4, 0.4, x, x), rel=1e-10)


def test_equator_sampling_variance_and_checks():
    p = ModelParams(hurst=0.75, alpha=1.5, L=8)
    u = sample_equator(p, 1.0, 64, 3, 2000)
    x = SphericalPoint(math.pi / 2, 0.0)
    assert abs(np.mean(u**2) / field_covariance(p, 1.0, 1.0, x, x) - 1) < 0.05
    with pytest.raises(DomainError):
        sample_equator(p, 1.0, 16, 3, 1)
    np.testing.assert_array_equal(u[:5], sample_equator(p, 1.0, 64, 3, 5))


# ---- I/O ------------------------------------------------------------------------------------------


def test_npz_and_csv_roundtrip(tmp_path):
    c = random_coeffs(4, 11, n_times=2)
    f = evaluate_field(c, random_grid(3, 12))
    save_field_npz(f, tmp_path / "f.npz")
    g = load_field_npz(tmp_path / "f.npz")
    np.testing.assert_array_equal(f.values, g.values)
    np.testing.assert_array_equal(f.grid.colatitude, g.grid.colatitude)
    assert g.provenance["L"] == 4
    buf = io.StringIO()
    write_field_csv(f, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "t,colatitude,longitude,value"
    assert len(rows) == 1 + 2 * 3
    assert float(rows[1].split(",")[3]) == f.values[0, 0, 0]


def test_grid_validation():
    with pytest.raises(DomainError):
        FieldGrid([0.1, 0.2], [0.0])
    with pytest.raises(DomainError):
        FieldGrid([3.5], [0.0])


# ---- properties ------------------------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_ring_and_direct_agree_property(L, seed):
    c = random_coeffs(L, seed)
    ring = FieldGrid.ring_grid([0.2, 1.6], 2 * L + 1)
    a = evaluate_field(c, ring).values
    b = evaluate_field(c, FieldGrid(ring.colatitude, ring.longitude)).values
    np.testing.assert_allclose(a, b, atol=1e-10 * max(1.0, np.abs(b).max()))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 30), st.floats(-4, 4), st.floats(-4, 4))
def test_smoothing_composes(l, k1, k2):
    assert smoothing_multiplier(l, k1) * smoothing_multiplier(l, k2) == pytest.approx(smoothing_multiplier(l, k1 + k2), rel=1e-12)
