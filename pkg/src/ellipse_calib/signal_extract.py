"""Per-MPC amplitude estimation from sampled received signals.

Amplitudes are projections of the (residual) received signal onto a delayed
copy of the unit-energy transmit pulse.  The projection conjugates the
received signal, so the returned coefficient is the complex conjugate of the
channel amplitude; magnitudes, and therefore power changes, are unaffected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.fft import fft, ifft, next_fast_len

from .errors import (DelayOutOfWindow, DomainError, EmptyIdleSet, OverlapWarning,
                     PhaseUnstableWarning, ZeroAmplitudeWarning)

POWER_FLOOR_DB = -120.0
# |mean| / mean(|.|) below this marks an idle set whose phase wanders
PHASE_COHERENCE_MIN = 0.5
# samples above this fraction of the peak magnitude count towards pulse width
WIDTH_LEVEL = 1e-3


@dataclass(frozen=True)
class SampledSignal:
    samples: np.ndarray
    sample_interval: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=complex)
        if x.ndim != 1 or len(x) == 0:
            raise DomainError("signal must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise DomainError("signal samples must be finite")
        if not (self.sample_interval > 0 and math.isfinite(self.sample_interval)):
            raise DomainError("sample interval must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) * self.sample_interval

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real * self.sample_interval)


@dataclass(frozen=True)
class MpcTemplate:
    mean_delay: float       # s
    reference_power: float  # dB

    def __post_init__(self):
        if not self.mean_delay >= 0:
            raise DomainError("mean delay must be non-negative")


def normalize_pulse(pulse: SampledSignal) -> SampledSignal:
    """Scale ``pulse`` to unit energy, ``sum |s|^2 dt = 1``."""
    e = pulse.energy
    if e <= 0:
        raise DomainError("pulse has zero energy")
    return SampledSignal(pulse.samples / math.sqrt(e), pulse.sample_interval)


def pulse_width(pulse: SampledSignal) -> float:
    """Time span of samples above ``WIDTH_LEVEL`` of the peak magnitude."""
    mag = np.abs(pulse.samples)
    idx = np.flatnonzero(mag >= WIDTH_LEVEL * mag.max())
    return float((idx[-1] - idx[0] + 1) * pulse.sample_interval)


def _check_grid(y: SampledSignal, pulse: SampledSignal):
    if not math.isclose(y.sample_interval, pulse.sample_interval, rel_tol=1e-9):
        raise DomainError("signal and pulse must share the sample interval")


def delayed_pulse(pulse: SampledSignal, tau: float, n: int) -> np.ndarray:
    """``s(t - tau)`` on ``n`` samples of the pulse's grid, unit energy on that window.

    Fractional delays use band-limited interpolation (a linear phase ramp in
    the frequency domain) on a zero-padded period long enough that no image
    of the pulse folds back into the window.
    """
    dt = pulse.sample_interval
    if not (0 <= tau <= (n - 1) * dt):
        raise DelayOutOfWindow(f"delay {tau:.6g} s outside the window [0, {(n - 1) * dt:.6g}] s")
    s = pulse.samples
    m = next_fast_len(2 * (n + len(s)))
    f = np.fft.fftfreq(m, d=dt)
    spec = fft(s, m) * np.exp(-2j * np.pi * f * tau)
    if m % 2 == 0:
        # keep the Nyquist bin real so a real pulse stays real
        spec[m // 2] = spec[m // 2].real * math.cos(math.pi * tau / dt)
    out = ifft(spec)[:n]
    e = float(np.vdot(out, out).real * dt)
    if e <= 0:
        raise DelayOutOfWindow("delayed pulse has no energy inside the window")
    return out / math.sqrt(e)


def project_amplitude(y: SampledSignal, pulse: SampledSignal, tau: float) -> complex:
    """``sum conj(y) * s(t - tau) * dt`` with the pulse normalized to unit energy."""
    _check_grid(y, pulse)
    s = delayed_pulse(normalize_pulse(pulse), tau, len(y))
    return complex(np.sum(np.conj(y.samples) * s) * y.sample_interval)


def extract_sequentially(y: SampledSignal, pulse: SampledSignal,
                         delays: Sequence[float]) -> list[complex]:
    """Project onto each delay in turn, subtracting the components found so far.

    Coefficients come back in the conjugated convention of
    :func:`project_amplitude`, so the subtracted component is ``conj(a) * s``.
    """
    _check_grid(y, pulse)
    delays = [float(t) for t in delays]
    if any(b < a for a, b in zip(delays, delays[1:])):
        raise DomainError("delays must be sorted ascending")
    unit = normalize_pulse(pulse)
    width = pulse_width(unit)
    if any(b - a < width for a, b in zip(delays, delays[1:])):
        warnings.warn(f"MPC delays closer than the pulse width ({width:.3g} s)",
                      OverlapWarning, stacklevel=2)
    resid = np.array(y.samples, dtype=complex)
    dt = y.sample_interval
    out = []
    for tau in delays:
        s = delayed_pulse(unit, tau, len(resid))
        a = complex(np.sum(np.conj(resid) * s) * dt)
        resid -= np.conj(a) * s
        out.append(a)
    return out


def residual_signal(y: SampledSignal, pulse: SampledSignal, delays: Sequence[float],
                    amplitudes: Sequence[complex]) -> SampledSignal:
    """``y`` with the given (conjugated-convention) components removed."""
    unit = normalize_pulse(pulse)
    resid = np.array(y.samples, dtype=complex)
    for tau, a in zip(delays, amplitudes):
        resid -= np.conj(a) * delayed_pulse(unit, float(tau), len(resid))
    return SampledSignal(resid, y.sample_interval)


def power_change(alpha, reference_power: float, floor: float = POWER_FLOOR_DB) -> float:
    """``20 log10 |alpha| - reference_power`` [dB]; a zero amplitude returns ``floor``."""
    mag = abs(complex(alpha))
    if mag == 0.0:
        warnings.warn(f"zero amplitude, power change clamped to {floor} dB",
                      ZeroAmplitudeWarning, stacklevel=2)
        return float(floor)
    return 20.0 * math.log10(mag) - reference_power


def reference_power(amplitudes: Sequence[complex],
                    floor: float = POWER_FLOOR_DB) -> tuple[float, float]:
    """Idle-channel ``(|mean amplitude|, its level in dB)``.

    Amplitudes are averaged as complex numbers; a mean much smaller than the
    mean magnitude raises :class:`PhaseUnstableWarning`.
    """
    a = np.asarray(amplitudes, dtype=complex).ravel()
    if len(a) == 0:
        raise EmptyIdleSet("no idle snapshots to average")
    mag = float(abs(a.mean()))
    spread = float(np.abs(a).mean())
    if spread > 0 and mag < PHASE_COHERENCE_MIN * spread:
        warnings.warn(f"idle amplitudes are phase incoherent (|mean|/mean|a| = {mag / spread:.3g})",
                      PhaseUnstableWarning, stacklevel=2)
    gamma = 20.0 * math.log10(mag) if mag > 0 else float(floor)
    return mag, gamma


def extract_power_changes(snapshots: Sequence[SampledSignal], pulse: SampledSignal,
                          delays: Sequence[float], idle: Sequence[int]) -> np.ndarray:
    """Power change per snapshot (rows) and MPC (columns) against the idle mean."""
    if len(idle) == 0:
        raise EmptyIdleSet("idle snapshot set is empty")
    amps = np.array([extract_sequentially(y, pulse, delays) for y in snapshots], dtype=complex)
    amps = amps.reshape(len(snapshots), len(delays))
    for i in idle:
        if not 0 <= i < len(snapshots):
            raise DomainError(f"idle index {i} out of range")
    z = np.empty(amps.shape)
    for n in range(len(delays)):
        _, gamma = reference_power(amps[list(idle), n])
        z[:, n] = [power_change(a, gamma) for a in amps[:, n]]
    return z
