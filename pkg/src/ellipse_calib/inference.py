"""Point-mass filter over the arc of a delay ellipse."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.signal import find_peaks
from scipy.special import i0e

from . import kernels
from .errors import DomainError, LowInformationWarning, MultimodalWarning, NumericalUnderflow
from .fading import FadingParams, FresnelConfig, NoiseModel, fresnel_max_radius
from .geometry import DelayEllipse, Vec2, _virtual_nodes_xy, arc_to_point, distance_to_ellipse

log = logging.getLogger(__name__)

DEFAULT_WAVELENGTH = 0.0577  # m, 5.2 GHz


@dataclass(frozen=True)
class EllipticNormal:
    """Von Mises density carried over to a closed curve of circumference ``L``."""

    circumference: float
    eta: float
    mean: float

    def __post_init__(self):
        if not self.circumference > 0:
            raise DomainError("circumference must be positive")
        if not self.eta >= 0:
            raise DomainError("eta must be non-negative")
        if not 0 <= self.mean < self.circumference:
            raise DomainError("mean arc length must lie in [0, L)")


def elliptic_normal_pdf(dist: EllipticNormal, s):
    # exp(eta*cos(x)) / I0(eta) == exp(eta*(cos(x) - 1)) / i0e(eta), overflow-free
    x = 2.0 * np.pi * (np.asarray(s, dtype=float) - dist.mean) / dist.circumference
    p = np.exp(dist.eta * (np.cos(x) - 1.0)) / (dist.circumference * i0e(dist.eta))
    return float(p) if p.ndim == 0 else p


@lru_cache(maxsize=64)
def transition_kernel(n: int, eta: float) -> np.ndarray:
    """Normalized circular kernel row ``k[m] ~ p(s^m | s^0, eta)`` for an n-point grid."""
    half = np.sin(np.pi * np.arange(n) / n)
    k = np.exp(-2.0 * eta * half * half)
    k /= k.sum()
    k.setflags(write=False)
    return k


def grid_size(circumference: float, spacing: float) -> int:
    if not 0 < spacing < circumference:
        raise DomainError("grid spacing must lie in (0, L)")
    return max(1, int(math.floor(circumference / spacing + 0.5)))


class PmfGrid:
    """Equidistant arc-length grid with precomputed reflection geometry."""

    def __init__(self, ellipse: DelayEllipse, n: int):
        self.ellipse = ellipse
        self.n = int(n)
        self.spacing = ellipse.circumference / self.n
        self.arcs = np.arange(self.n) * self.spacing

    @cached_property
    def points(self) -> np.ndarray:
        return arc_to_point(self.ellipse, self.arcs)

    @cached_property
    def virtual_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        vt, vr = _virtual_nodes_xy(self.ellipse, self.points)
        return np.ascontiguousarray(vt), np.ascontiguousarray(vr)


@dataclass(frozen=True)
class PmfState:
    grid: PmfGrid
    weights: np.ndarray

    @property
    def ellipse(self) -> DelayEllipse:
        return self.grid.ellipse

    @property
    def arcs(self) -> np.ndarray:
        return self.grid.arcs


class Measurement(NamedTuple):
    k: int
    z: float
    user: Vec2


class MmseEstimate(NamedTuple):
    arc: float
    multimodal: bool


def pmf_init(ellipse: DelayEllipse, spacing: float) -> PmfState:
    n = grid_size(ellipse.circumference, spacing)
    return PmfState(PmfGrid(ellipse, n), np.full(n, 1.0 / n))


def _normalized(w: np.ndarray, grid: PmfGrid) -> PmfState:
    total = w.sum()
    if not (total > 0 and np.isfinite(total)):
        raise NumericalUnderflow("weights vanished")
    return PmfState(grid, w / total)


def pmf_predict(state: PmfState, eta: float) -> PmfState:
    if not eta >= 0:
        raise DomainError("eta must be non-negative")
    k = transition_kernel(state.grid.n, float(eta))
    return _normalized(kernels.circular_convolve(state.weights, k), state.grid)


def log_likelihood(state: PmfState, m: Measurement, fading: FadingParams,
                   noise: NoiseModel) -> np.ndarray:
    """Per-grid-point Gaussian log-likelihood of ``m`` (additive constant dropped)."""
    e = state.ellipse
    vt, vr = state.grid.virtual_nodes
    near, far, th = noise.regimes()
    return kernels.loglik_grid(float(m.z), float(m.user[0]), float(m.user[1]),
                               np.asarray(e.link.tx), np.asarray(e.link.rx), vt, vr,
                               e.d, fading.phi, fading.kappa, near, far, th)


def pmf_update(state: PmfState, m: Measurement, fading: FadingParams,
               noise: NoiseModel) -> PmfState:
    if not (math.isfinite(m.z) and math.isfinite(m.user[0]) and math.isfinite(m.user[1])):
        raise DomainError("measurement must be finite")
    w = kernels.bayes_update(state.weights, log_likelihood(state, m, fading, noise))
    if not np.isfinite(w[0]):
        raise NumericalUnderflow("all posterior weights underflowed")
    return PmfState(state.grid, w)


def _mmse_arc(state: PmfState) -> float:
    arc = float(kernels.mmse_arc(state.weights, state.grid.spacing))
    L = state.ellipse.circumference
    return arc - L if arc >= L else arc


def find_modes(weights: np.ndarray, rel_prominence: float = 0.1) -> list[tuple[int, float]]:
    """Circular local maxima with prominence >= ``rel_prominence * max``.

    Returns ``(peak_index, basin_mass)`` pairs sorted by decreasing mass.  The
    basin of a peak extends to the lowest points between it and its neighbours.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    peak = w.max()
    if n < 3 or peak <= 0:
        return []
    start = int(np.argmin(w))
    rolled = np.roll(w, -start)
    padded = np.concatenate([rolled, rolled[:1]])
    idx, _ = find_peaks(padded, prominence=rel_prominence * peak)
    idx = idx[idx < n]
    if len(idx) == 0:
        return []
    cuts = [0]
    for a, b in zip(idx[:-1], idx[1:]):
        cuts.append(a + int(np.argmin(rolled[a:b + 1])))
    cuts.append(n)
    out = [(int((p + start) % n), float(rolled[lo:hi].sum()))
           for p, lo, hi in zip(idx, cuts[:-1], cuts[1:])]
    return sorted(out, key=lambda t: -t[1])


def is_multimodal(state: PmfState, ratio: float = 0.5) -> bool:
    modes = find_modes(state.weights)
    return len(modes) >= 2 and modes[1][1] > ratio * modes[0][1]


def pmf_mmse(state: PmfState) -> MmseEstimate:
    """Arc length minimising the expected squared wrapped distance under the posterior.

    Ties resolve to the smallest arc length.  A :class:`MultimodalWarning` is
    issued (and flagged) when two separated modes carry comparable mass.
    """
    arc = _mmse_arc(state)
    multi = is_multimodal(state)
    if multi:
        warnings.warn("posterior has comparable separated modes", MultimodalWarning, stacklevel=2)
    return MmseEstimate(arc, multi)


def elliptic_error(circumference: float, s_hat, s_true):
    """Shortest distance along the ellipse between two arc lengths."""
    diff = np.abs(np.asarray(s_hat, dtype=float) - np.asarray(s_true, dtype=float))
    err = np.minimum(diff, circumference - diff)
    return float(err) if err.ndim == 0 else err


def default_gate_distance(ellipse: DelayEllipse, wavelength: float = DEFAULT_WAVELENGTH,
                          zone_number: int = 3) -> float:
    return fresnel_max_radius(FresnelConfig(wavelength, zone_number), ellipse.d)


def gate_measurement(e: DelayEllipse, m: Measurement, gate_distance: float) -> bool:
    """True to use ``m``; False when the user stands within ``gate_distance`` of the ellipse."""
    if not gate_distance >= 0:
        raise DomainError("gate distance must be non-negative")
    if gate_distance == 0:
        return True
    return not distance_to_ellipse(e, m.user) < gate_distance


# --------------------------------------------------------------------------
# Driver


@dataclass
class CalibrationResult:
    estimates: np.ndarray          # MMSE arc length after each step
    accepted: np.ndarray           # bool per step, False when gated
    final_state: PmfState
    multimodal: bool
    low_information: bool
    errors: np.ndarray | None = None
    history: np.ndarray | None = None   # (steps, N) weights when requested

    @property
    def final_estimate(self) -> float:
        return float(self.estimates[-1]) if len(self.estimates) else float(_mmse_arc(self.final_state))

    @property
    def final_error(self) -> float | None:
        return None if self.errors is None or not len(self.errors) else float(self.errors[-1])


def run_calibration(ellipse: DelayEllipse, measurements: Sequence[Measurement],
                    fading: FadingParams, noise: NoiseModel, spacing: float, eta: float,
                    gate_distance: float | None = None, truth_arc: float | None = None,
                    keep_history: bool = False,
                    wavelength: float = DEFAULT_WAVELENGTH) -> CalibrationResult:
    """Run gate -> predict -> update -> MMSE over ``measurements`` in order.

    ``gate_distance=None`` uses the third Fresnel zone's maximum radius at the
    MPC's path length for ``wavelength``.  Gated steps still predict.
    """
    if len(measurements) == 0:
        raise DomainError("need at least one measurement")
    if gate_distance is None:
        gate_distance = default_gate_distance(ellipse, wavelength)
    state = pmf_init(ellipse, spacing)
    n_steps = len(measurements)
    estimates = np.empty(n_steps)
    accepted = np.zeros(n_steps, dtype=bool)
    history = np.empty((n_steps, state.grid.n)) if keep_history else None

    if gate_distance > 0:
        users = np.array([m.user for m in measurements], dtype=float)
        accepted[:] = ~(distance_to_ellipse(ellipse, users) < gate_distance)
    else:
        accepted[:] = True

    # Same steps as pmf_predict / pmf_update / pmf_mmse, on bare arrays.
    grid = state.grid
    w = state.weights
    kernel = transition_kernel(grid.n, float(eta))
    vt, vr = grid.virtual_nodes
    tx = np.asarray(ellipse.link.tx)
    rx = np.asarray(ellipse.link.rx)
    near, far, th = noise.regimes()
    L = ellipse.circumference
    for k, m in enumerate(measurements):
        w = kernels.circular_convolve(w, kernel)
        total = w.sum()
        if not (total > 0 and np.isfinite(total)):
            raise NumericalUnderflow("weights vanished")
        w /= total
        if accepted[k]:
            z, ux, uy = float(m.z), float(m.user[0]), float(m.user[1])
            if not (math.isfinite(z) and math.isfinite(ux) and math.isfinite(uy)):
                raise DomainError(f"measurement {m.k} is not finite")
            ll = kernels.loglik_grid(z, ux, uy, tx, rx, vt, vr, ellipse.d,
                                     fading.phi, fading.kappa, near, far, th)
            w = kernels.bayes_update(w, ll)
            if not np.isfinite(w[0]):
                raise NumericalUnderflow(f"all posterior weights underflowed at step {m.k}")
        arc = kernels.mmse_arc(w, grid.spacing)
        estimates[k] = arc - L if arc >= L else arc
        if history is not None:
            history[k] = w
    state = PmfState(grid, w)

    low_info = not accepted.any()
    if low_info:
        warnings.warn("no measurement survived gating", LowInformationWarning, stacklevel=2)
    errors = None
    if truth_arc is not None:
        errors = elliptic_error(ellipse.circumference, estimates, truth_arc)
    log.debug("calibration: %d steps, %d accepted", n_steps, int(accepted.sum()))
    return CalibrationResult(estimates, accepted, state, is_multimodal(state), low_info,
                             errors, history)
