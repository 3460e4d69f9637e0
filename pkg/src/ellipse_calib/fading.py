"""Exponential MPC fading model, two-regime noise model and Fresnel quantities."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateNoiseWarning, DomainError, FitDiverged, InsufficientData


class UserType(str, enum.Enum):
    PEDESTRIAN = "pedestrian"
    BIKE = "bike"
    CAR = "car"
    CUSTOM = "custom"


class NoiseKind(str, enum.Enum):
    UNIFORM = "uniform"
    LOCATION_DEPENDENT = "location_dependent"


@dataclass(frozen=True)
class FadingParams:
    """Signed maximum power change ``phi`` [dB] and spatial decay rate ``kappa`` [m]."""

    phi: float
    kappa: float
    user_type: UserType = UserType.CUSTOM

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError("kappa must be positive")
        if self.phi == 0 or not math.isfinite(self.phi):
            raise DomainError("phi must be finite and non-zero")
        object.__setattr__(self, "user_type", UserType(self.user_type))


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind
    sigma_bar: float | None = None
    sigma1: float | None = None
    sigma2: float | None = None
    xi_th: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind is NoiseKind.UNIFORM:
            if not (self.sigma_bar and self.sigma_bar > 0):
                raise DomainError("uniform noise needs sigma_bar > 0")
        else:
            s1, s2, th = self.sigma1, self.sigma2, self.xi_th
            if s1 is None or s2 is None or th is None:
                raise DomainError("location-dependent noise needs sigma1, sigma2 and xi_th")
            if not (0 < s1 < s2):
                raise DomainError("need 0 < sigma1 < sigma2")
            if not th > 0:
                raise DomainError("xi_th must be positive")

    @classmethod
    def uniform(cls, sigma: float) -> "NoiseModel":
        return cls(NoiseKind.UNIFORM, sigma_bar=sigma)

    @classmethod
    def location_dependent(cls, sigma1: float, sigma2: float, xi_th: float) -> "NoiseModel":
        return cls(NoiseKind.LOCATION_DEPENDENT, sigma1=sigma1, sigma2=sigma2, xi_th=xi_th)

    def regimes(self) -> tuple[float, float, float]:
        """``(sigma_near, sigma_far, xi_th)``; a uniform model collapses both regimes."""
        if self.kind is NoiseKind.UNIFORM:
            return self.sigma_bar, self.sigma_bar, 0.0
        return self.sigma2, self.sigma1, self.xi_th


@dataclass(frozen=True)
class FresnelConfig:
    wavelength: float
    zone_number: int = 3

    def __post_init__(self):
        if not self.wavelength > 0:
            raise DomainError("wavelength must be positive")
        if int(self.zone_number) != self.zone_number or self.zone_number < 1:
            raise DomainError("zone_number must be a positive integer")


def predicted_change(params: FadingParams, xi_tx, xi_rx):
    """Modelled power change [dB] for the two excess path lengths."""
    f = params.phi * (np.exp(-np.asarray(xi_tx) / params.kappa)
                      + np.exp(-np.asarray(xi_rx) / params.kappa))
    return float(f) if np.ndim(f) == 0 else f


def fresnel_threshold(cfg: FresnelConfig) -> float:
    return cfg.zone_number * cfg.wavelength / 2.0


def fresnel_max_radius(cfg: FresnelConfig, d: float) -> float:
    """Largest radius of the ``n_F``-th Fresnel zone over a path of length ``d``."""
    if not d > 0:
        raise DomainError("path length must be positive")
    return math.sqrt(cfg.zone_number * cfg.wavelength * d) / 2.0


def noise_sigma(model: NoiseModel, xi_min):
    near, far, th = model.regimes()
    s = np.where(np.asarray(xi_min) <= th, near, far)
    return float(s) if s.ndim == 0 else s


# --------------------------------------------------------------------------
# Fitting


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DomainError("samples must be rows of (xi_tx, xi_rx, z)")
    return arr


def fit_fading_params(samples, user_type: UserType | str = UserType.CUSTOM) -> FadingParams:
    """Least-squares fit of ``(phi, kappa)`` to rows of ``(xi_tx, xi_rx, z)``.

    Levenberg-Marquardt on ``(phi, log kappa)``; raises :class:`FitDiverged`
    unless the fitted model explains strictly more than the all-zero model.
    """
    arr = _as_samples(samples)
    if len(arr) < 10:
        raise InsufficientData("need at least 10 samples")
    xt, xr, z = arr.T
    xi_min = np.minimum(xt, xr)

    phi0 = float(z[np.argmax(np.abs(z))])
    if phi0 == 0.0:
        raise FitDiverged("all power changes are zero")
    strong = np.abs(z) > abs(phi0) / 2.0
    kappa0 = float(np.median(xi_min[strong])) if strong.any() else float(np.median(xi_min))
    kappa0 = max(kappa0, 1e-4)

    def resid(p):
        return p[0] * (np.exp(-xt * np.exp(-p[1])) + np.exp(-xr * np.exp(-p[1]))) - z

    sol = least_squares(resid, [phi0, math.log(kappa0)], method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    zero_cost = 0.5 * float(z @ z)
    if not (np.all(np.isfinite(sol.x)) and sol.cost < zero_cost * (1.0 - 1e-9)):
        raise FitDiverged(f"fit did not improve on the zero model ({sol.message})")
    phi, kappa = float(sol.x[0]), float(math.exp(sol.x[1]))
    if phi == 0.0 or not np.isfinite(kappa) or kappa <= 0.0:
        raise FitDiverged("degenerate fitted parameters")
    return FadingParams(phi, kappa, UserType(user_type))


def residuals(params: FadingParams, samples) -> tuple[np.ndarray, np.ndarray]:
    """``(xi_min, z - f)`` for every sample row."""
    xt, xr, z = _as_samples(samples).T
    return np.minimum(xt, xr), z - predicted_change(params, xt, xr)


def fit_noise_sigmas(residual_pairs, xi_th: float) -> tuple[float, float]:
    """Sample standard deviations ``(sigma1, sigma2)`` of the far and near regimes.

    The near regime (``xi_min <= xi_th``) gives ``sigma2``.
    """
    arr = np.asarray(residual_pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("residuals must be rows of (xi_min, r)")
    near = arr[:, 0] <= xi_th
    if near.sum() < 2 or (~near).sum() < 2:
        raise InsufficientData("both noise regimes need at least two samples")
    sigma2 = float(np.std(arr[near, 1], ddof=1))
    sigma1 = float(np.std(arr[~near, 1], ddof=1))
    if sigma1 == 0.0 or sigma2 == 0.0:
        warnings.warn("zero residual spread in a noise regime", DegenerateNoiseWarning, stacklevel=2)
    return sigma1, sigma2
