"""Single-bounce propagation geometry on delay ellipses.

Conventions used throughout:

* The local frame of a link has its origin at the midpoint of Tx and Rx and
  its x-axis pointing from Tx to Rx.  Parameter ``theta = 0`` is the local
  point ``(a, 0)``, i.e. the vertex on the Rx side, and arc length grows
  counter-clockwise in the local frame.
* Arc lengths live in ``[0, L)`` and ellipse parameters in ``[0, 2*pi)``.

Functions accept a single point (``Vec2`` or any length-2 sequence) or an
``(N, 2)`` array; scalar inputs give scalar outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateEllipse, DegenerateRp, DomainError

SPEED_OF_LIGHT = 299_792_458.0  # m/s

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class Vec2(NamedTuple):
    x: float
    y: float


def _vec(p) -> Vec2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite point {p!r}")
    return Vec2(x, y)


@dataclass(frozen=True)
class NetworkLink:
    tx: Vec2
    rx: Vec2

    def __post_init__(self):
        object.__setattr__(self, "tx", _vec(self.tx))
        object.__setattr__(self, "rx", _vec(self.rx))
        if self.los_distance <= 0.0:
            raise DomainError("tx and rx coincide")

    @property
    def los_distance(self) -> float:
        return math.hypot(self.rx.x - self.tx.x, self.rx.y - self.tx.y)


@dataclass(frozen=True)
class Mpc:
    """A multipath component, identified by its propagation path length."""

    path_length: float

    @classmethod
    def from_delay(cls, delay: float) -> "Mpc":
        return cls(SPEED_OF_LIGHT * delay)

    @property
    def delay(self) -> float:
        return self.path_length / SPEED_OF_LIGHT


@dataclass(frozen=True)
class Surface:
    """A straight reflecting wall segment."""

    p0: Vec2
    p1: Vec2

    def __post_init__(self):
        object.__setattr__(self, "p0", _vec(self.p0))
        object.__setattr__(self, "p1", _vec(self.p1))
        if self.p0 == self.p1:
            raise DomainError("surface endpoints coincide")


@dataclass(frozen=True)
class DelayEllipse:
    """Feasible reflection points of one MPC; foci at the link's Tx and Rx."""

    link: NetworkLink
    path_length: float
    a: float
    b: float
    center: Vec2
    rotation_angle: float
    eccentricity: float
    circumference: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "circumference", 4.0 * self.a * self._arc.quarter)

    @classmethod
    def from_axes(cls, a: float, b: float, center=(0.0, 0.0), rotation: float = 0.0) -> "DelayEllipse":
        """Synthetic ellipse from its semi-axes; allows the circle ``a == b``.

        Foci are placed on the rotated major axis.  Intended for tests and
        numerical studies; real links go through :func:`make_delay_ellipse`.
        """
        if not (a > 0 and 0 < b <= a):
            raise DomainError("need 0 < b <= a")
        c = math.sqrt(max(a * a - b * b, 0.0))
        cx, cy = float(center[0]), float(center[1])
        ux, uy = math.cos(rotation), math.sin(rotation)
        link = object.__new__(NetworkLink)
        object.__setattr__(link, "tx", Vec2(cx - c * ux, cy - c * uy))
        object.__setattr__(link, "rx", Vec2(cx + c * ux, cy + c * uy))
        return cls(link, 2.0 * a, a, b, Vec2(cx, cy), rotation, math.sqrt(1.0 - (b / a) ** 2))

    @property
    def d(self) -> float:
        return self.path_length

    @cached_property
    def _arc(self) -> "_ArcTable":
        return _ArcTable(self.eccentricity ** 2)

    @cached_property
    def _rot(self) -> np.ndarray:
        c, s = math.cos(self.rotation_angle), math.sin(self.rotation_angle)
        return np.array([[c, -s], [s, c]])


def make_delay_ellipse(link: NetworkLink, mpc: Mpc) -> DelayEllipse:
    d = mpc.path_length
    d_l = link.los_distance
    if not d > d_l:
        raise DegenerateEllipse(f"path length {d} m does not exceed LoS distance {d_l} m")
    a = d / 2.0
    b = math.sqrt(d * d - d_l * d_l) / 2.0
    if not 0.0 < b < a:
        raise DegenerateEllipse("semi-minor axis collapsed")
    tx, rx = link.tx, link.rx
    center = Vec2((tx.x + rx.x) / 2.0, (tx.y + rx.y) / 2.0)
    ex, ey = (rx.x - tx.x) / d_l, (rx.y - tx.y) / d_l
    # det([e_x, e_xl]) = ey; a zero determinant (anti-parallel case) keeps the + sign
    sign = -1.0 if ey < 0.0 else 1.0
    alpha = sign * math.acos(max(-1.0, min(1.0, ex)))
    ecc = math.sqrt(1.0 - (b / a) ** 2)
    return DelayEllipse(link, d, a, b, center, alpha, ecc)


# --------------------------------------------------------------------------
# Arc length


class _ArcTable:
    """Adaptive composite Gauss-Legendre panels for F(u) = int_0^u g, u in [0, pi/2].

    g(t) = sqrt(1 - m cos^2 t).  The panel partition is refined until the
    16-point rule agrees with its two-halves refinement to ``tol``.
    """

    def __init__(self, m: float, tol: float = 1e-15):
        self.m = m
        edges_lo, edges_hi, vals = [], [], []
        lo = np.array([0.0])
        hi = np.array([HALF_PI])
        for _ in range(60):
            whole = self._gl(lo, hi)
            mid = 0.5 * (lo + hi)
            halves = self._gl(lo, mid) + self._gl(mid, hi)
            ok = np.abs(whole - halves) <= tol * np.maximum(hi - lo, 1e-3)
            edges_lo.append(lo[ok])
            edges_hi.append(hi[ok])
            vals.append(halves[ok])
            if ok.all():
                break
            bad = ~ok
            lo, hi = np.concatenate([lo[bad], mid[bad]]), np.concatenate([mid[bad], hi[bad]])
        else:  # pragma: no cover - needs m absurdly close to 1
            raise DomainError("arc-length quadrature did not converge")
        lo = np.concatenate(edges_lo)
        order = np.argsort(lo)
        self.lo = lo[order]
        self.hi = np.concatenate(edges_hi)[order]
        panel = np.concatenate(vals)[order]
        self.cum = np.concatenate([[0.0], np.cumsum(panel)])
        self.quarter = float(self.cum[-1])

    def g(self, t):
        c = np.cos(t)
        return np.sqrt(1.0 - self.m * c * c)

    def _gl(self, lo, hi):
        half = 0.5 * (hi - lo)
        x = (0.5 * (hi + lo))[..., None] + half[..., None] * _GL_NODES
        return half * (self.g(x) @ _GL_WEIGHTS)

    def F(self, u):
        """Quarter-arc integral for ``u`` in ``[0, pi/2]`` (array)."""
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.searchsorted(self.lo, u, side="right") - 1, 0, len(self.lo) - 1)
        lo = self.lo[idx]
        # inside a panel: integrate with two half-panels for extra accuracy
        mid = 0.5 * (lo + u)
        return self.cum[idx] + self._gl(lo, mid) + self._gl(mid, u)


def _check_theta(theta):
    t = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > TWO_PI):
        raise DomainError("theta must lie in [0, 2*pi]")
    return t


def _unit_arc(e: DelayEllipse, t: np.ndarray) -> np.ndarray:
    """Arc length divided by ``a`` for theta already validated."""
    tab = e._arc
    Q = tab.quarter
    q = np.minimum(np.floor(t / HALF_PI), 3.0)
    r = np.clip(t - q * HALF_PI, 0.0, HALF_PI)
    odd = (q % 2) == 1
    u = np.where(odd, HALF_PI - r, r)
    f = tab.F(u)
    return q * Q + np.where(odd, Q - f, f)


def arc_length(e: DelayEllipse, theta):
    """Arc length from ``theta = 0`` to ``theta`` (counter-clockwise, local frame)."""
    t = _check_theta(theta)
    s = e.a * _unit_arc(e, t)
    return float(s) if s.ndim == 0 else s


def _check_arc(e: DelayEllipse, s):
    s = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0.0) or np.any(s >= e.circumference):
        raise DomainError(f"arc length must lie in [0, {e.circumference})")
    return s


def _invert(e: DelayEllipse, s: np.ndarray) -> np.ndarray:
    tab = e._arc
    Q = tab.quarter
    su = s / e.a
    q = np.minimum(np.floor(su / Q), 3.0)
    r = np.clip(su - q * Q, 0.0, Q)
    odd = (q % 2) == 1
    target = np.where(odd, Q - r, r)

    # bisection-safeguarded Newton on F(u) = target, u in [0, pi/2]
    lo = np.zeros_like(target)
    hi = np.full_like(target, HALF_PI)
    u = target / Q * HALF_PI
    tol = 4e-16 * Q
    for _ in range(100):
        res = tab.F(u) - target
        done = np.abs(res) <= tol
        if done.all():
            break
        lo = np.where(res < 0.0, u, lo)
        hi = np.where(res > 0.0, u, hi)
        step = u - res / tab.g(u)
        bad = ~((step > lo) & (step < hi))
        step = np.where(bad, 0.5 * (lo + hi), step)
        u = np.where(done, u, step)
    theta = q * HALF_PI + np.where(odd, HALF_PI - u, u)
    return np.where(theta >= TWO_PI, theta - TWO_PI, theta)


def inverse_arc_length(e: DelayEllipse, s):
    """Ellipse parameter whose arc length equals ``s``; no closed form, solved numerically."""
    s = _check_arc(e, s)
    theta = _invert(e, s)
    return float(theta) if theta.ndim == 0 else theta


def to_world(e: DelayEllipse, xy_local: np.ndarray) -> np.ndarray:
    return np.asarray(xy_local, dtype=float) @ e._rot.T + np.asarray(e.center)


def to_local(e: DelayEllipse, p: np.ndarray) -> np.ndarray:
    return (np.asarray(p, dtype=float) - np.asarray(e.center)) @ e._rot


def arc_to_point(e: DelayEllipse, s):
    """World coordinates of the ellipse point at arc length ``s``."""
    s = _check_arc(e, s)
    theta = _invert(e, np.atleast_1d(s))
    local = np.column_stack([e.a * np.cos(theta), e.b * np.sin(theta)])
    pts = to_world(e, local)
    if s.ndim == 0:
        return Vec2(float(pts[0, 0]), float(pts[0, 1]))
    return pts


def theta_to_arc(e: DelayEllipse, theta) -> np.ndarray:
    """Arc length for any real ``theta`` (wrapped into ``[0, 2*pi)``), result in ``[0, L)``."""
    t = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    s = e.a * _unit_arc(e, t)
    return np.where(s >= e.circumference, s - e.circumference, s)


# --------------------------------------------------------------------------
# Nearest point on the ellipse


def _closest_first_quadrant(e0, e1, y0, y1, iters=160):
    """Closest point on x^2/e0^2 + y^2/e1^2 = 1 to (y0, y1) with y0, y1 >= 0.

    Robust bisection on the Lagrange-multiplier root (D. Eberly, "Distance
    from a Point to an Ellipse").  Vectorized over the point arrays.
    """
    x0 = np.empty_like(y0)
    x1 = np.empty_like(y0)

    # Points within 1e-12*e1 of the major axis go to the on-axis branch: the
    # multiplier root sits at -1 there and y1 / (s + 1) loses all precision.
    near_axis = y1 <= 1e-12 * e1

    # y1 > 0 and y0 > 0: general case
    gen = ~near_axis & (y0 > 0)
    if gen.any():
        z0 = y0[gen] / e0
        z1 = y1[gen] / e1
        g = z0 * z0 + z1 * z1 - 1.0
        r0 = (e0 / e1) ** 2
        n0 = r0 * z0
        s0 = z1 - 1.0
        s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
        s = 0.5 * (s0 + s1)
        for _ in range(iters):
            s = 0.5 * (s0 + s1)
            # the midpoint stops moving once the bracket is a single ulp
            if np.all((s == s0) | (s == s1)):
                break
            ratio0 = n0 / (s + r0)
            ratio1 = z1 / (s + 1.0)
            gs = ratio0 * ratio0 + ratio1 * ratio1 - 1.0
            s0 = np.where(gs > 0, s, s0)
            s1 = np.where(gs < 0, s, s1)
        on = g == 0
        a0 = r0 * y0[gen] / (s + r0)
        a1 = y1[gen] / (s + 1.0)
        # Near the major axis s + 1 is tiny and a1 inherits the bisection's
        # rounding; take the coordinate from the ellipse equation instead
        # whenever that is the better conditioned of the two.
        q = (a0 / e0) ** 2
        a1 = np.where(q < 0.5, e1 * np.sqrt(np.maximum(1.0 - q, 0.0)), a1)
        a0, a1 = _polish(e0, e1, y0[gen], y1[gen], a0, a1)
        x0[gen] = np.where(on, y0[gen], a0)
        x1[gen] = np.where(on, y1[gen], a1)

    # y1 > 0, y0 == 0: closest point is the co-vertex
    cov = ~near_axis & ~(y0 > 0)
    x0[cov] = 0.0
    x1[cov] = e1

    # y1 == 0: on the major axis
    ax = near_axis
    if ax.any():
        numer = e0 * y0[ax]
        denom = e0 * e0 - e1 * e1
        inside = numer < denom
        with np.errstate(divide="ignore", invalid="ignore"):
            xde = np.where(inside, numer / denom if denom > 0 else 0.0, 1.0)
        x0[ax] = np.where(inside, e0 * xde, e0)
        x1[ax] = np.where(inside, e1 * np.sqrt(np.maximum(1.0 - xde * xde, 0.0)), 0.0)
    return x0, x1


def _polish(e0, e1, y0, y1, x0, x1, steps=4):
    """Newton steps on the stationarity condition in the ellipse parameter.

    Each step is kept only where it does not increase the distance, so the
    bisection result is never made worse.
    """
    t = np.arctan2(x1 / e1, x0 / e0)
    c2 = e0 * e0 - e1 * e1
    best = (e0 * np.cos(t) - y0) ** 2 + (e1 * np.sin(t) - y1) ** 2
    for _ in range(steps):
        ct, st = np.cos(t), np.sin(t)
        f = c2 * st * ct - y0 * e0 * st + y1 * e1 * ct
        df = c2 * (ct * ct - st * st) - y0 * e0 * ct - y1 * e1 * st
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = np.clip(t - f / df, 0.0, HALF_PI)
        dn = (e0 * np.cos(tn) - y0) ** 2 + (e1 * np.sin(tn) - y1) ** 2
        better = np.isfinite(dn) & (dn <= best)
        t = np.where(better, tn, t)
        best = np.where(better, dn, best)
    return e0 * np.cos(t), e1 * np.sin(t)


def _project(e: DelayEllipse, p):
    """Closest local points and distances for an ``(N, 2)`` array of world points."""
    loc = to_local(e, np.atleast_2d(np.asarray(p, dtype=float)))
    lx, ly = loc[:, 0], loc[:, 1]
    x0, x1 = _closest_first_quadrant(e.a, e.b, np.abs(lx), np.abs(ly))
    # ties on an axis resolve toward the non-negative side, i.e. the smaller arc length
    cx = np.where(lx < 0, -x0, x0)
    cy = np.where(ly < 0, -x1, x1)
    dist = np.hypot(cx - lx, cy - ly)
    return cx, cy, dist


def point_to_arc(e: DelayEllipse, p):
    """Arc length of the ellipse point nearest to ``p``."""
    arr = np.asarray(p, dtype=float)
    cx, cy, _ = _project(e, arr)
    s = theta_to_arc(e, np.arctan2(cy / e.b, cx / e.a))
    return float(s[0]) if arr.ndim == 1 else s


def distance_to_ellipse(e: DelayEllipse, p):
    arr = np.asarray(p, dtype=float)
    _, _, dist = _project(e, arr)
    return float(dist[0]) if arr.ndim == 1 else dist


# --------------------------------------------------------------------------
# Virtual nodes and excess path lengths


def _virtual_nodes_xy(e: DelayEllipse, rp: np.ndarray):
    rp = np.atleast_2d(np.asarray(rp, dtype=float))
    tx = np.asarray(e.link.tx)
    rx = np.asarray(e.link.rx)
    v_rx = rp - rx
    v_tx = rp - tx
    n_rx = np.hypot(v_rx[:, 0], v_rx[:, 1])[:, None]
    n_tx = np.hypot(v_tx[:, 0], v_tx[:, 1])[:, None]
    if np.any(n_rx == 0.0) or np.any(n_tx == 0.0):
        raise DegenerateRp("reflection point coincides with a focus")
    vt = rx + e.d * v_rx / n_rx
    vr = tx + e.d * v_tx / n_tx
    return vt, vr


def virtual_nodes(e: DelayEllipse, rp):
    """Virtual transmitter and receiver for a reflection point ``rp``.

    ``vt`` lies on the ray Rx -> RP at distance ``d`` from Rx and ``vr`` on
    the ray Tx -> RP at distance ``d`` from Tx.
    """
    arr = np.asarray(rp, dtype=float)
    vt, vr = _virtual_nodes_xy(e, arr)
    if arr.ndim == 1:
        return Vec2(*vt[0]), Vec2(*vr[0])
    return vt, vr


def excess_paths(e: DelayEllipse, rp, user):
    """Excess path lengths ``(xi_tx, xi_rx, xi_min)`` of a user w.r.t. the path through ``rp``.

    ``rp`` and ``user`` broadcast against each other (one may be ``(N, 2)``).
    """
    rp_arr = np.asarray(rp, dtype=float)
    u_arr = np.asarray(user, dtype=float)
    vt, vr = _virtual_nodes_xy(e, rp_arr)
    u = np.atleast_2d(u_arr)
    tx = np.asarray(e.link.tx)
    rx = np.asarray(e.link.rx)

    def dist(p, q):
        diff = p - q
        return np.hypot(diff[..., 0], diff[..., 1])

    xi_tx = dist(tx, u) + dist(vr, u) - e.d
    xi_rx = dist(vt, u) + dist(rx, u) - e.d
    xi_min = np.minimum(xi_tx, xi_rx)
    if rp_arr.ndim == 1 and u_arr.ndim == 1:
        return float(xi_tx[0]), float(xi_rx[0]), float(xi_min[0])
    return xi_tx, xi_rx, xi_min


# --------------------------------------------------------------------------
# Surfaces


def _dedup_circular(arcs: Sequence[float], period: float, tol: float) -> list[float]:
    out: list[float] = []
    for s in sorted(arcs):
        if out and s - out[-1] <= tol:
            continue
        out.append(s)
    if len(out) > 1 and out[0] + period - out[-1] <= tol:
        out.pop()
    return out


def find_reflection_points(e: DelayEllipse, surfaces: Sequence[Surface],
                           dedup_tol: float = 1e-3) -> list[float]:
    """Arc lengths where any surface segment meets the ellipse (intersection or tangency)."""
    arcs = []
    for surf in surfaces:
        p0, p1 = to_local(e, np.array([surf.p0, surf.p1]))
        dx, dy = p1 - p0
        ia2, ib2 = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
        A = dx * dx * ia2 + dy * dy * ib2
        B = 2.0 * (p0[0] * dx * ia2 + p0[1] * dy * ib2)
        C = p0[0] * p0[0] * ia2 + p0[1] * p0[1] * ib2 - 1.0
        disc = B * B - 4.0 * A * C
        scale = B * B + 4.0 * abs(A * C)
        if abs(disc) <= 1e-12 * scale:
            roots = [-B / (2.0 * A)]
        elif disc < 0.0:
            continue
        else:
            q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
            roots = [q / A, C / q] if q != 0.0 else [-B / (2.0 * A)]
        for t in roots:
            if -1e-12 <= t <= 1.0 + 1e-12:
                x, y = p0 + t * np.array([dx, dy])
                arcs.append(float(theta_to_arc(e, math.atan2(y / e.b, x / e.a))))
    return _dedup_circular(arcs, e.circumference, dedup_tol)
