import math
import warnings

import numpy as np
import pytest

from ellipse_calib.errors import (DegenerateNoiseWarning, DomainError, FitDiverged,
                                  InsufficientData)
from ellipse_calib.fading import (FadingParams, FresnelConfig, NoiseKind, NoiseModel, UserType,
                                  fit_fading_params, fit_noise_sigmas, fresnel_max_radius,
                                  fresnel_threshold, noise_sigma, predicted_change, residuals)
from ellipse_calib.presets import (eta_preset, fading_preset, fresnel_preset, noise_preset,
                                   wavelength_preset)

F = FadingParams(-2.5, 0.015)


def test_predicted_change_examples():
    assert predicted_change(F, 0.0, 0.0) == -5.0
    assert abs(predicted_change(F, 100 * F.kappa, 100 * F.kappa)) < 1e-10 * 2.5
    assert predicted_change(F, F.kappa, 1e6) == pytest.approx(-2.5 / math.e)
    assert round(predicted_change(F, F.kappa, 1e6), 4) == -0.9197


def test_predicted_change_properties():
    rng = np.random.default_rng(0)
    xt, xr = rng.exponential(0.05, (2, 1000))
    f = predicted_change(F, xt, xr)
    np.testing.assert_array_equal(f, predicted_change(F, xr, xt))
    assert np.all(np.abs(f) <= 2 * abs(F.phi)) and np.all(f < 0)
    grid = np.linspace(0, 0.4, 200)
    assert np.all(np.diff(np.abs(predicted_change(F, grid, 1e6))) < 0)


def test_params_validation():
    with pytest.raises(DomainError):
        FadingParams(0.0, 0.1)
    with pytest.raises(DomainError):
        FadingParams(-1.0, 0.0)
    with pytest.raises(ValueError):
        FadingParams(-1.0, 0.1, "horse")
    assert FadingParams(1.0, 0.1, "bike").user_type is UserType.BIKE
    with pytest.raises(DomainError):
        NoiseModel.location_dependent(1.0, 0.5, 0.1)
    with pytest.raises(DomainError):
        NoiseModel.uniform(0.0)
    with pytest.raises(DomainError):
        FresnelConfig(0.1, 0)


def _four_decimals(value, tabulated):
    # n*lambda/2 lands exactly on a rounding tie for both tabulated wavelengths
    return abs(value - tabulated) <= 0.5e-4 + 1e-12


def test_fresnel():
    assert _four_decimals(fresnel_threshold(FresnelConfig(0.0577, 3)), 0.0865)
    assert _four_decimals(fresnel_threshold(FresnelConfig(0.0751, 3)), 0.1126)
    assert fresnel_threshold(FresnelConfig(0.0577, 3)) == pytest.approx(3 * 0.0577 / 2)
    assert fresnel_threshold(FresnelConfig(2.0, 1)) == 1.0
    assert fresnel_max_radius(FresnelConfig(1.0, 1), 4.0) == 1.0
    assert fresnel_max_radius(FresnelConfig(0.0577, 3), 38.673) == pytest.approx(
        math.sqrt(3 * 0.0577 * 38.673) / 2)
    assert fresnel_max_radius(FresnelConfig(0.0577, 3), 38.673) == pytest.approx(1.2936, abs=1e-4)
    assert fresnel_max_radius(FresnelConfig(0.0751, 3), 4.0) == pytest.approx(0.4747, abs=1e-4)
    with pytest.raises(DomainError):
        fresnel_max_radius(FresnelConfig(1.0, 1), 0.0)


def test_noise_sigma():
    m = noise_preset("setup1")
    assert (m.sigma1, m.sigma2, m.xi_th) == (0.2813, 0.7957, 0.0865)
    assert noise_sigma(m, 0.05) == 0.7957
    assert noise_sigma(m, 1.0) == 0.2813
    assert noise_sigma(m, m.xi_th) == 0.7957
    assert noise_sigma(m, np.nextafter(m.xi_th, 1)) == 0.2813
    u = noise_preset("setup1", NoiseKind.UNIFORM)
    assert noise_sigma(u, np.array([0.0, 5.0])).tolist() == [0.4659, 0.4659]


def test_presets():
    p = fading_preset("setup1_bike")
    assert (p.phi, p.kappa, p.user_type) == (-3.2809, 0.0193, UserType.BIKE)
    assert fading_preset("setup2_filter").phi == -2.5
    assert wavelength_preset("setup3") == 0.0751
    assert _four_decimals(fresnel_threshold(fresnel_preset("setup3")), 0.1126)
    L = 97.93
    assert eta_preset("setupII", L) == pytest.approx((L / (2 * math.pi)) ** 2 / 1e-8)
    with pytest.raises(DomainError):
        fading_preset("nope")


def _samples(rng, n, phi, kappa, sigma=0.0):
    xt = rng.exponential(3 * kappa, n)
    xr = rng.exponential(3 * kappa, n) + rng.choice([0, 1.0], n)
    z = phi * (np.exp(-xt / kappa) + np.exp(-xr / kappa)) + sigma * rng.standard_normal(n)
    return np.column_stack([xt, xr, z])


def test_fit_exact_recovery():
    rng = np.random.default_rng(1)
    p = fit_fading_params(_samples(rng, 200, -2.5, 0.015), "pedestrian")
    assert p.phi == pytest.approx(-2.5, rel=1e-6)
    assert p.kappa == pytest.approx(0.015, rel=1e-6)
    assert p.user_type is UserType.PEDESTRIAN


def test_fit_noisy_recovery_monte_carlo():
    ok = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        p = fit_fading_params(_samples(rng, 10_000, 3.2809, 0.0193, sigma=0.1))
        ok += abs(p.phi / 3.2809 - 1) < 0.05 and abs(p.kappa / 0.0193 - 1) < 0.05
    assert ok >= 19


def test_fit_failures():
    rng = np.random.default_rng(2)
    with pytest.raises(InsufficientData):
        fit_fading_params(_samples(rng, 9, -2.5, 0.015))
    far = np.column_stack([rng.uniform(10, 20, 100), rng.uniform(10, 20, 100), np.zeros(100)])
    with pytest.raises(FitDiverged):
        fit_fading_params(far)


def test_fit_noise_sigmas():
    rng = np.random.default_rng(3)
    xi = rng.uniform(0, 0.2, 100_000)
    r = np.where(xi <= 0.0865, 1.0, 0.5) * rng.standard_normal(len(xi))
    s1, s2 = fit_noise_sigmas(np.column_stack([xi, r]), 0.0865)
    assert s1 == pytest.approx(0.5, rel=0.02) and s2 == pytest.approx(1.0, rel=0.02)
    with pytest.raises(InsufficientData):
        fit_noise_sigmas(np.column_stack([np.full(10, 1.0), np.ones(10)]), 0.0865)
    with pytest.warns(DegenerateNoiseWarning):
        assert fit_noise_sigmas(np.column_stack([[0.0, 0.0, 1.0, 1.0], np.zeros(4)]), 0.5) == (0, 0)


def test_residuals_roundtrip():
    rng = np.random.default_rng(4)
    s = _samples(rng, 50, -2.5, 0.015)
    xi_min, r = residuals(F, s)
    np.testing.assert_allclose(r, 0.0, atol=1e-12)
    np.testing.assert_array_equal(xi_min, np.minimum(s[:, 0], s[:, 1]))
