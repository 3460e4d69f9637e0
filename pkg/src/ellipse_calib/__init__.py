"""Bayesian estimation of multipath reflection points on delay ellipses.

The point of reflection of a single-bounce multipath component lies on an
ellipse whose foci are the transmitter and receiver.  A user walking through
the environment attenuates the component when crossing its path; a
point-mass filter over the ellipse's arc length turns those power changes
into an estimate of where the reflection happens.

Modules: :mod:`geometry` (delay ellipses, arc length, virtual nodes),
:mod:`fading` (fading and noise models), :mod:`inference` (the filter),
:mod:`scenario` (synthetic data), :mod:`signal_extract` (amplitudes from
sampled signals) and :mod:`cli`.
"""

from .errors import *  # noqa: F401,F403
from .fading import FadingParams, FresnelConfig, NoiseKind, NoiseModel, UserType
from .geometry import (DelayEllipse, Mpc, NetworkLink, Surface, Vec2, arc_length, arc_to_point,
                       excess_paths, find_reflection_points, inverse_arc_length,
                       make_delay_ellipse, point_to_arc, virtual_nodes)
from .inference import (CalibrationResult, Measurement, PmfState, elliptic_error, pmf_init,
                        pmf_mmse, pmf_predict, pmf_update, run_calibration)
from .kernels import BACKEND

__version__ = "0.1.0"
