import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from oracles import lag_kernel_direct, mode_covariance_grid, spectral_weight_integral

from sphere_fheat import fbm_kernel as fk
from sphere_fheat.errors import DomainError

H75 = fk.FbmConvention(0.75)


# ---- conventions and R_H ----------------------------------------------------------


def test_convention_constants():
    assert H75.alpha_h == pytest.approx(0.375)
    assert H75.kernel_factor == H75.alpha_h
    with pytest.raises(DomainError):
        fk.FbmConvention(0.5)
    with pytest.raises(DomainError):
        fk.FbmConvention(1.0)


def test_r_cov_examples():
    assert fk.r_cov(1.0, 1.0, H75) == pytest.approx(1.0)
    for H in (0.55, 0.8):
        assert fk.r_cov(0.7, 0.0, fk.FbmConvention(H)) == 0.0
    assert fk.r_cov(2.0, 1.0, H75) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert math.sqrt(2.0) == pytest.approx(1.4142136, abs=1e-7)
    with pytest.raises(DomainError):
        fk.r_cov(-1.0, 1.0, H75)


# ---- weighted inner product -----------------------------------------------------


@pytest.mark.parametrize("H", [0.55, 0.75, 0.95])
def test_inner_indicator_unit_variance(H):
    conv = fk.FbmConvention(H)
    one = fk.ExpKernelSpec(0.0, 1.0)
    assert fk.weighted_inner(one, one, conv) == pytest.approx(1.0, rel=1e-10)


def test_inner_indicator_reproduces_r_cov():
    v = fk.weighted_inner(fk.ExpKernelSpec(0.0, 2.0), fk.ExpKernelSpec(0.0, 1.0), H75)
    assert v == pytest.approx(math.sqrt(2.0), rel=1e-10)


def test_inner_matches_fourier_engine():
    spec = fk.ExpKernelSpec.for_degree(1, 1.0)
    assert spec.decay_rate == 2.0
    v = fk.weighted_inner(spec, spec, H75)
    assert v == pytest.approx(fk.sigma_l_sq_fourier(1, 1.0, H75), rel=1e-6)


def test_exp_kernel_validation():
    with pytest.raises(DomainError):
        fk.ExpKernelSpec(-1.0, 1.0)
    with pytest.raises(DomainError):
        fk.ExpKernelSpec(1.0, -1.0)


# ---- sigma_l^2 ----------------------------------------------------------------------


def test_sigma_l0_is_fbm_variance():
    assert fk.sigma_l_sq(0, 1.0, H75) == pytest.approx(1.0)


def test_sigma_below_stationary_bound():
    l, lam = 20, 420.0
    bound = H75.c_h * fk.c33(H75) * H75.alpha_h * lam ** (-1.5)
    v = fk.sigma_l_sq(20, 1.0, H75, method="quadrature")
    assert v <= bound * (1 + 1e-10)
    assert v == pytest.approx(fk.stationary_variance(l, H75), rel=1e-8)


def test_sigma_against_grid_oracle():
    conv = fk.FbmConvention(0.6)
    ref = mode_covariance_grid(5, 1.0, 1.0, 0.6)
    assert fk.sigma_l_sq(5, 1.0, conv, method="quadrature") == pytest.approx(ref, rel=1e-4)


def test_fourier_engine_agreement_example():
    assert fk.sigma_l_sq_fourier(3, 0.5, H75) == pytest.approx(fk.sigma_l_sq(3, 0.5, H75, method="quadrature"), rel=1e-6)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_engines_agree_grid(H):
    conv = fk.FbmConvention(H)
    for l in (1, 2, 7, 32):
        for t in (0.1, 0.5, 1.0):
            a = fk.sigma_l_sq(l, t, conv, method="quadrature")
            b = fk.sigma_l_sq_fourier(l, t, conv)
            assert abs(a - b) <= 1e-6 * abs(a)


def test_plateau_large_time():
    a = fk.sigma_l_sq_fourier(5, 10.0, H75)
    b = fk.sigma_l_sq_fourier(5, 20.0, H75)
    assert abs(a - b) <= 1e-6 * abs(b)
    assert fk.sigma_l_sq(5, 20.0, H75, method="quadrature") == pytest.approx(fk.stationary_variance(5, H75), rel=1e-8)


def test_scaling_ratio_bounded():
    l = np.arange(4, 65)
    lam = l * (l + 1.0)
    ratio = np.array([fk.sigma_l_sq(int(k), 1.0, H75) for k in l]) * lam**1.5
    assert ratio.max() / ratio.min() < 1.05
    assert 0 < ratio.min()


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_decay_slope(H):
    conv = fk.FbmConvention(H)
    l = np.arange(8, 65)
    s = np.array([fk.sigma_l_sq(int(k), 1.0, conv) for k in l])
    slope = np.polyfit(np.log(l + 0.5), np.log(s), 1)[0]
    assert abs(slope + 4 * H) <= 0.05


def test_sigma_domain():
    with pytest.raises(DomainError):
        fk.sigma_l_sq(2, 0.0, H75)
    with pytest.raises(DomainError):
        fk.sigma_l_sq(2, 1.0, H75, method="bogus")
    with pytest.raises(DomainError):
        fk.sigma_l_sq_fourier(0, 1.0, H75)


# ---- c33 ----------------------------------------------------------------------------


def test_c33_value():
    assert fk.c33(H75) == pytest.approx(4.4428829, abs=1e-7)
    assert fk.c33(H75) == pytest.approx(spectral_weight_integral(1.0, 0.75), rel=1e-10)


def test_c33_rejects_near_half():
    with pytest.raises(DomainError):
        fk.c33(fk.FbmConvention(0.5005))
    assert math.isfinite(fk.c33(fk.FbmConvention(0.501)))


def test_c33_scaling_with_lambda():
    assert spectral_weight_integral(6.0, 0.75) == pytest.approx(fk.c33(H75) * 6.0**-1.5, rel=1e-8)


# ---- lag kernel and stationary sums -----------------------------------------------------


@pytest.mark.parametrize("r", [0.0, 1e-3, 0.05, 0.4, 2.0])
def test_lag_kernel_direct(r):
    assert fk.lag_kernel(3, r, H75) == pytest.approx(lag_kernel_direct(3, r, 0.75), rel=1e-9)


def test_lag_kernel_at_zero_is_plateau():
    assert fk.lag_kernel(4, 0.0, H75) == pytest.approx(fk.stationary_variance(4, H75), rel=1e-10)


def test_spectral_sum_matches_mode_sum():
    deg = np.array([1, 3, 8])
    w = np.array([0.5, 1.0, 2.0])
    S = fk.SpectralSum(deg, w, H75)
    assert S.variance() == pytest.approx(sum(wi * fk.stationary_variance(int(d), H75) for d, wi in zip(deg, w)), rel=1e-12)
    for r in (0.01, 0.2, 1.5):
        ref = sum(wi * (fk.lag_kernel(int(d), 0.0, H75) - fk.lag_kernel(int(d), r, H75)) for d, wi in zip(deg, w))
        assert S.increment(r) == pytest.approx(ref, rel=1e-8)
    assert S.increment(0.0) == 0.0


# ---- mode covariance ---------------------------------------------------------------------


def test_u_cov_examples():
    assert fk.u_cov(0, 1.0, 1.0, 1.0, 0.0, H75) == pytest.approx(1.0)
    for l in (0, 3, 10):
        assert fk.u_cov(l, 0.0, 0.0, 1.0, 0.37, H75) == pytest.approx(0.37)


def test_u_cov_against_grid_oracle():
    conv = fk.FbmConvention(0.7)
    ref = mode_covariance_grid(2, 0.7, 0.3, 0.7)
    assert fk.u_cov(2, 0.7, 0.3, 1.0, 0.0, conv) == pytest.approx(ref, rel=1e-4)


def test_u_cov_negative_inputs():
    with pytest.raises(DomainError):
        fk.u_cov(1, -0.1, 0.2, 1.0, 0.0, H75)
    with pytest.raises(DomainError):
        fk.u_cov(1, 0.1, 0.2, -1.0, 0.0, H75)


@pytest.mark.parametrize("l,t,s,H", [(1, 0.5, 1.0, 0.75), (4, 0.9, 0.2, 0.6), (8, 1.0, 0.95, 0.9), (0, 0.4, 0.8, 0.7)])
def test_u_cov_brute_force(l, t, s, H):
    conv = fk.FbmConvention(H)
    ref = mode_covariance_grid(l, t, s, H, C=1.3, D=0.4)
    assert fk.u_cov(l, t, s, 1.3, 0.4, conv) == pytest.approx(ref, rel=1e-4)


def test_kernel_matrix_entries_and_psd():
    times = np.array([0.0, 0.1, 0.25, 0.5, 1.0])
    for l in (0, 1, 5):
        K = fk.noise_kernel_matrix(l, times, H75)
        assert np.allclose(K, K.T, atol=0)
        assert np.linalg.eigvalsh(K).min() >= -1e-12 * np.trace(K)
        for i, j in ((1, 3), (4, 2), (4, 4)):
            assert K[i, j] == pytest.approx(fk.u_cov(l, times[i], times[j], 1.0, 0.0, H75), rel=1e-9, abs=1e-15)


def test_kernel_matrix_example_against_oracle():
    K = fk.noise_kernel_matrix(1, [0.5, 1.0], H75)
    for i, t in enumerate((0.5, 1.0)):
        for j, s in enumerate((0.5, 1.0)):
            assert K[i, j] == pytest.approx(mode_covariance_grid(1, t, s, 0.75), rel=1e-4)


# ---- properties -------------------------------------------------------------------------

times_st = st.floats(0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 12), times_st, times_st, st.floats(0.55, 0.95))
def test_u_cov_symmetric(l, t, s, H):
    conv = fk.FbmConvention(H)
    assert fk.u_cov(l, t, s, 1.0, 0.5, conv) == fk.u_cov(l, s, t, 1.0, 0.5, conv)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6, unique=True), st.floats(0.55, 0.95))
def test_kernel_matrix_psd_property(l, times, H):
    K = fk.noise_kernel_matrix(l, sorted(times), fk.FbmConvention(H))
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * np.trace(K)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.floats(0.01, 0.9), st.floats(0.55, 0.95))
def test_sigma_increasing_in_time(l, t, H):
    conv = fk.FbmConvention(H)
    assert fk.sigma_l_sq(l, t, conv) <= fk.sigma_l_sq(l, t + 0.1, conv) * (1 + 1e-9)
