"""Synthetic calibration scenarios: ground truth and measurement synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import AmbiguousRp, DomainError, NoRpFound
from .fading import FadingParams, FresnelConfig, NoiseModel, noise_sigma, predicted_change
from .geometry import (DelayEllipse, Mpc, NetworkLink, Surface, Vec2, arc_to_point,
                       distance_to_ellipse, excess_paths, find_reflection_points,
                       make_delay_ellipse)
from .inference import DEFAULT_WAVELENGTH, Measurement, default_gate_distance


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[Vec2, ...]
    speed: float
    update_time: float

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(Vec2(float(p[0]), float(p[1]))
                                                    for p in self.waypoints))
        if len(self.waypoints) < 2:
            raise DomainError("trajectory needs at least two waypoints")
        if not (self.speed > 0 and self.update_time > 0):
            raise DomainError("speed and update time must be positive")


@dataclass(frozen=True)
class Scenario:
    links: tuple[NetworkLink, ...]
    surfaces: tuple[Surface, ...]
    mpcs: tuple[tuple[Mpc, ...], ...]      # mpcs[i] belong to links[i]
    trajectory: Trajectory
    fading: FadingParams
    noise: NoiseModel
    seed: int = 0
    wavelength: float = DEFAULT_WAVELENGTH
    direct_scatter: bool = False

    def __post_init__(self):
        if len(self.mpcs) != len(self.links):
            raise DomainError("need one MPC list per link")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")
        for link, group in zip(self.links, self.mpcs):
            for mpc in group:
                if not mpc.path_length > link.los_distance:
                    raise DomainError("MPC path length must exceed the LoS distance")

    def mpc_keys(self) -> list[tuple[int, int]]:
        """``(link, mpc)`` index pairs in file order."""
        return [(i, n) for i, group in enumerate(self.mpcs) for n in range(len(group))]

    def ellipse(self, link: int, mpc: int) -> DelayEllipse:
        return make_delay_ellipse(self.links[link], self.mpcs[link][mpc])


class RpTruth(NamedTuple):
    link: int
    mpc: int
    arc: float
    point: Vec2


@dataclass
class GroundTruth:
    entries: dict[tuple[int, int], RpTruth] = field(default_factory=dict)

    def __getitem__(self, key: tuple[int, int]) -> RpTruth:
        return self.entries[key]

    def __iter__(self):
        return iter(self.entries.values())

    def __len__(self):
        return len(self.entries)


def sample_trajectory(t: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Constant-speed samples every ``update_time``; returns ``(times, points)``."""
    wp = np.asarray(t.waypoints, dtype=float)
    seg = np.hypot(*np.diff(wp, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise DomainError("trajectory has zero length")
    step = t.speed * t.update_time
    n = int(math.floor(total / step * (1 + 1e-12))) + 1
    dist = np.minimum(np.arange(n) * step, total)
    keep = np.concatenate([[True], seg > 0])
    x = np.interp(dist, cum[keep], wp[keep, 0])
    y = np.interp(dist, cum[keep], wp[keep, 1])
    return np.arange(n) * t.update_time, np.column_stack([x, y])


def derive_ground_truth(scenario: Scenario) -> GroundTruth:
    """The unique surface contact on each MPC's delay ellipse."""
    gt = GroundTruth()
    for i, n in scenario.mpc_keys():
        e = scenario.ellipse(i, n)
        arcs = find_reflection_points(e, scenario.surfaces)
        if not arcs:
            raise NoRpFound(f"link {i} mpc {n}: no surface meets the delay ellipse")
        if len(arcs) > 1:
            raise AmbiguousRp(f"link {i} mpc {n}: {len(arcs)} candidate reflection points")
        s = arcs[0] % e.circumference
        gt.entries[(i, n)] = RpTruth(i, n, s, arc_to_point(e, s))
    return gt


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed ^ index))


def synthesize_measurements(scenario: Scenario, gt: GroundTruth) -> dict[tuple[int, int], list[Measurement]]:
    """Noisy power changes along the trajectory for each MPC, seeded per MPC."""
    times, users = sample_trajectory(scenario.trajectory)
    out = {}
    for index, key in enumerate(scenario.mpc_keys()):
        e = scenario.ellipse(*key)
        truth = gt[key]
        xi_tx, xi_rx, xi_min = excess_paths(e, truth.point, users)
        xi_tx = np.maximum(xi_tx, 0.0)
        xi_rx = np.maximum(xi_rx, 0.0)
        f = predicted_change(scenario.fading, xi_tx, xi_rx)
        sigma = noise_sigma(scenario.noise, np.maximum(xi_min, 0.0))
        rng = _rng(scenario.seed, index)
        z = f + sigma * rng.standard_normal(len(users))
        if scenario.direct_scatter:
            gate = default_gate_distance(e, scenario.wavelength)
            near = distance_to_ellipse(e, users) < gate
            z = z + np.where(near, 3.0 * sigma, 0.0) * rng.standard_normal(len(users))
        out[key] = [Measurement(k + 1, float(z[k]), Vec2(float(users[k, 0]), float(users[k, 1])))
                    for k in range(len(users))]
    return out


def measurement_times(scenario: Scenario) -> np.ndarray:
    return sample_trajectory(scenario.trajectory)[0]


def fresnel_config(scenario: Scenario, zone_number: int = 3) -> FresnelConfig:
    return FresnelConfig(scenario.wavelength, zone_number)
