"""Continuous-time geometry: tangent lengths, departure curves, spirals, path legs.

A tangent leg departing disc i at time tau touches disc i's boundary at tau and
disc j's boundary at the arrival time tau' = tau + len/v_max.  Its length
satisfies the implicit equation

    len = sqrt(L**2 - (r_i(tau) +/- r_j(tau'))**2)

with '+' for inner tangents and '-' for outer ones.  The equation is solved in
closed form when disc j has constant velocity, otherwise by fixed-point
iteration with a first-sign-change bisection fallback.  Every solution is
certified by the residual check before it is used.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .scene import Disc, Scene, VelocityPoly

__all__ = [
    "TangentKind",
    "TangentEdge",
    "Leg",
    "RobotPath",
    "DomainError",
    "radius",
    "tangent_length",
    "tangent_length_array",
    "solve_tangent_quadratic",
    "solve_tangent_fixedpoint",
    "tangent_geometry",
    "departure_theta",
    "departure_theta_array",
    "departure_position",
    "compute_pair_domain",
    "in_domain",
    "tangent_leg",
    "spiral_to_angle",
    "race_spiral",
    "SpiralHit",
]

RESIDUAL_RTOL = 1e-9          # certification of the implicit tangent equation
FIXED_POINT_ATOL = 1e-12      # absolute tolerance on the length iterate
FIXED_POINT_MAX_ITER = 200
DOMAIN_BISECT_TOL = 1e-10     # time resolution of domain endpoints
SPIRAL_EVENT_TOL = 1e-10      # time resolution of angle-crossing events

SOURCE_ID = -1  # virtual zero-radius disc for the query source
DEST_ID = -2    # virtual zero-radius disc for the query destination


class DomainError(ValueError):
    """Requested a tangent or leg outside its time domain."""


class TangentKind(enum.Enum):
    INNER_LEFT = "inner_left"
    INNER_RIGHT = "inner_right"
    OUTER_LEFT = "outer_left"
    OUTER_RIGHT = "outer_right"

    @property
    def inner(self) -> bool:
        return self in (TangentKind.INNER_LEFT, TangentKind.INNER_RIGHT)

    @property
    def side(self) -> int:
        """+1 if the departure point lies in the left half-plane of o_i -> o_j."""
        return 1 if self in (TangentKind.INNER_LEFT, TangentKind.OUTER_LEFT) else -1


KIND_ORDER = (
    TangentKind.INNER_LEFT,
    TangentKind.INNER_RIGHT,
    TangentKind.OUTER_LEFT,
    TangentKind.OUTER_RIGHT,
)


@dataclass(frozen=True)
class TangentEdge:
    """Directed tangent connection between two discs, one of the four kinds.

    ``domain`` is the sorted union of closed time intervals within [0, horizon]
    where the tangent exists and its arrival stays within the horizon.
    """

    id: int
    di: Disc
    dj: Disc
    kind: TangentKind
    domain: tuple[tuple[float, float], ...]

    @property
    def from_disc(self) -> int:
        return self.di.id

    @property
    def to_disc(self) -> int:
        return self.dj.id

    @property
    def is_query_edge(self) -> bool:
        return self.di.id < 0 or self.dj.id < 0


@dataclass(frozen=True)
class Leg:
    """One timed piece of a robot path, traversed at exactly v_max."""

    kind: str  # "tangent" | "spiral"
    t_start: float
    t_end: float
    start: tuple[float, float]
    end: tuple[float, float]
    disc_id: Optional[int] = None          # spiral legs: the disc being ridden
    direction: Optional[str] = None        # spiral legs: "cw" | "ccw"
    samples: tuple[tuple[float, float, float], ...] = ()  # (t, x, y) for spirals

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def length(self, v_max: float) -> float:
        return v_max * self.duration

    def position(self, t: float) -> tuple[float, float]:
        """Robot position at time t in [t_start, t_end]."""
        if self.kind == "tangent":
            if self.t_end <= self.t_start:
                return self.start
            u = (t - self.t_start) / (self.t_end - self.t_start)
            return (
                self.start[0] + u * (self.end[0] - self.start[0]),
                self.start[1] + u * (self.end[1] - self.start[1]),
            )
        return _interp_samples(self.samples, t)

    def positions(self, ts: np.ndarray) -> np.ndarray:
        if self.kind == "tangent":
            if self.t_end <= self.t_start:
                return np.tile(np.asarray(self.start), (len(ts), 1))
            u = (ts - self.t_start) / (self.t_end - self.t_start)
            return np.stack(
                [
                    self.start[0] + u * (self.end[0] - self.start[0]),
                    self.start[1] + u * (self.end[1] - self.start[1]),
                ],
                axis=1,
            )
        return np.asarray([_interp_samples(self.samples, t) for t in ts])


def _interp_samples(samples, t: float) -> tuple[float, float]:
    ts = [s[0] for s in samples]
    k = int(np.searchsorted(ts, t))
    if k <= 0:
        return (samples[0][1], samples[0][2])
    if k >= len(samples):
        return (samples[-1][1], samples[-1][2])
    t0, x0, y0 = samples[k - 1]
    t1, x1, y1 = samples[k]
    u = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
    return (x0 + u * (x1 - x0), y0 + u * (y1 - y0))


@dataclass(frozen=True)
class RobotPath:
    """Timed sequence of tangent segments and spiral arcs."""

    legs: tuple[Leg, ...]
    arrival_time: float

    @property
    def t_start(self) -> float:
        return self.legs[0].t_start if self.legs else 0.0

    def position(self, t: float) -> tuple[float, float]:
        for leg in self.legs:
            if t <= leg.t_end:
                return leg.position(max(t, leg.t_start))
        return self.legs[-1].end if self.legs else (0.0, 0.0)


# ---------------------------------------------------------------------------
# radii and tangent lengths
# ---------------------------------------------------------------------------

def radius(disc: Disc, t: float, horizon: Optional[float] = None) -> float:
    """r(t) = v(t) * t + radius0; rejects times outside [0, horizon]."""
    if t < -1e-12 or (horizon is not None and t > horizon * (1 + 1e-12) + 1e-12):
        raise DomainError(f"time {t} outside [0, {horizon}]")
    return float(disc.radius(t))


def _center_gap(di: Disc, dj: Disc) -> float:
    return math.dist(di.center, dj.center)


def _tangent_residual(di: Disc, dj: Disc, inner: bool, tau: float, ell: float, v_max: float) -> float:
    L = _center_gap(di, dj)
    s = di.radius(tau) + dj.radius(tau + ell / v_max) if inner else di.radius(tau) - dj.radius(tau + ell / v_max)
    rad = L * L - s * s
    if rad < -1e-9 * max(1.0, L * L):
        return math.inf
    return math.sqrt(max(rad, 0.0)) - ell


def solve_tangent_quadratic(di: Disc, dj: Disc, inner: bool, tau: float, v_max: float) -> Optional[float]:
    """Closed-form length when disc j has constant velocity (degree 0).

    The implicit equation reduces to a quadratic in the length; when a tangent
    exists exactly one root is both positive and residual-certified, and two
    positive roots (overlapping-disc configurations) resolve to the smaller.
    """
    if dj.velocity.effective_degree != 0:
        raise ValueError("quadratic solver requires a constant-velocity target disc")
    c0 = dj.velocity.coeffs[0]
    L = _center_gap(di, dj)
    rj_tau = c0 * tau + dj.radius0
    x = di.radius(tau) + rj_tau if inner else di.radius(tau) - rj_tau
    sgn = 1.0 if inner else -1.0
    a = v_max * v_max + c0 * c0
    b = sgn * 2.0 * x * c0 * v_max
    c = v_max * v_max * (x * x - L * L)
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    roots = sorted(((-b - sq) / (2 * a), (-b + sq) / (2 * a)))
    for r in roots:
        if r >= -1e-12:
            ell = max(r, 0.0)
            if abs(_tangent_residual(di, dj, inner, tau, ell, v_max)) <= RESIDUAL_RTOL * max(1.0, ell):
                return ell
    return None


def solve_tangent_fixedpoint(di: Disc, dj: Disc, inner: bool, tau: float, v_max: float) -> Optional[float]:
    """Iterate len -> sqrt(L^2 - (r_i +/- r_j(tau + len/v_max))^2) from the static estimate.

    Falls back to bisection on the first sign change of the residual when the
    iteration stalls.  Tolerance 1e-12 absolute, at most 200 iterations.
    """
    L = _center_gap(di, dj)
    ri = di.radius(tau)

    def g(ell: float) -> Optional[float]:
        s = ri + dj.radius(tau + ell / v_max) if inner else ri - dj.radius(tau + ell / v_max)
        rad = L * L - s * s
        if rad < 0:
            return None
        return math.sqrt(rad)

    ell = g(0.0)
    if ell is None:
        return None
    for _ in range(FIXED_POINT_MAX_ITER):
        nxt = g(ell)
        if nxt is None:
            break
        if abs(nxt - ell) <= FIXED_POINT_ATOL:
            ell = nxt
            if abs(_tangent_residual(di, dj, inner, tau, ell, v_max)) <= RESIDUAL_RTOL * max(1.0, ell):
                return ell
            break
        ell = nxt
    return _bisect_first_root(di, dj, inner, tau, v_max)


def _bisect_first_root(di: Disc, dj: Disc, inner: bool, tau: float, v_max: float) -> Optional[float]:
    """First positive root of F(len) = len - g(len) on [0, L] by scan + bisection."""
    L = _center_gap(di, dj)
    ri = di.radius(tau)

    def f(ell: float) -> Optional[float]:
        s = ri + dj.radius(tau + ell / v_max) if inner else ri - dj.radius(tau + ell / v_max)
        rad = L * L - s * s
        if rad < 0:
            return None
        return ell - math.sqrt(rad)

    n = 512
    prev_t, prev_f = 0.0, f(0.0)
    if prev_f is None:
        return None
    if prev_f >= 0:  # g(0) == 0: touching discs, zero-length tangent
        return 0.0 if abs(prev_f) <= RESIDUAL_RTOL else None
    for k in range(1, n + 1):
        t = L * k / n
        ft = f(t)
        if ft is None:
            # radicand died: refine the edge of definition; F there is positive
            lo, hi = prev_t, t
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if f(mid) is None:
                    hi = mid
                else:
                    lo = mid
            t, ft = lo, f(lo)
            if ft is None or ft < 0:
                return None
        if ft >= 0:
            lo, hi = prev_t, t
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if fm is None or fm >= 0:
                    hi = mid
                else:
                    lo = mid
            ell = 0.5 * (lo + hi)
            if abs(_tangent_residual(di, dj, inner, tau, ell, v_max)) <= RESIDUAL_RTOL * max(1.0, ell):
                return ell
            return None
        prev_t, prev_f = t, ft
    return None


def _bisect_first_root_array(
    di: Disc,
    dj: Disc,
    inner: bool,
    taus: np.ndarray,
    v_max: float,
    L: float,
    ri: np.ndarray,
    scan: int = 65,
    iters: int = 64,
) -> np.ndarray:
    """Vectorized first positive root of F(l) = l - g(l) over [0, L] per lane.

    The hi side of the bracket is "F >= 0 or the radicand has died", matching
    the scalar fallback's semantics.
    """
    sgn = 1.0 if inner else -1.0
    n = len(taus)

    def f_and_dead(ell: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = ri + sgn * dj.radius(taus + ell / v_max)
        rad = L * L - s * s
        dead = rad < 0
        with np.errstate(invalid="ignore"):
            f = ell - np.sqrt(np.where(dead, np.nan, rad))
        return f, dead

    grid = np.linspace(0.0, L, scan)
    lo = np.zeros(n)
    hi = np.full(n, np.nan)
    prev_f, _ = f_and_dead(np.zeros(n))
    done_zero = prev_f >= 0  # touching discs: zero-length tangent
    prev_l = np.zeros(n)
    for gl in grid[1:]:
        cand = np.full(n, gl)
        f, dead = f_and_dead(cand)
        flip = np.isnan(hi) & ~done_zero & (prev_f < 0) & (dead | (f >= 0))
        lo = np.where(flip, prev_l, lo)
        hi = np.where(flip, gl, hi)
        keep = np.isnan(hi) & ~dead & np.isfinite(f)
        prev_f = np.where(keep, f, prev_f)
        prev_l = np.where(keep, gl, prev_l)
    out = np.full(n, np.nan)
    out[done_zero] = 0.0
    have = np.isfinite(hi)
    if have.any():
        lo_h, hi_h = lo.copy(), hi.copy()
        for _ in range(iters):
            mid = 0.5 * (lo_h + hi_h)
            f, dead = f_and_dead(mid)
            hi_side = dead | (np.nan_to_num(f, nan=1.0) >= 0)
            hi_h = np.where(have & hi_side, mid, hi_h)
            lo_h = np.where(have & ~hi_side, mid, lo_h)
        out[have] = 0.5 * (lo_h[have] + hi_h[have])
    return out


def tangent_length(
    di: Disc,
    dj: Disc,
    inner: bool,
    tau: float,
    v_max: float,
    method: str = "auto",
) -> Optional[tuple[float, float]]:
    """Certified tangent length and arrival time, or None if no tangent exists at tau."""
    if method == "auto":
        method = "quadratic" if dj.velocity.effective_degree == 0 else "fixedpoint"
    if method == "quadratic":
        ell = solve_tangent_quadratic(di, dj, inner, tau, v_max)
    elif method == "fixedpoint":
        ell = solve_tangent_fixedpoint(di, dj, inner, tau, v_max)
    else:
        raise ValueError(f"unknown method {method!r}")
    if ell is None:
        return None
    return ell, tau + ell / v_max


def tangent_length_array(
    di: Disc,
    dj: Disc,
    inner: bool,
    taus: np.ndarray,
    v_max: float,
) -> np.ndarray:
    """Vectorized tangent lengths over an array of departure times (NaN = none)."""
    taus = np.asarray(taus, dtype=float)
    L = _center_gap(di, dj)
    ri = di.radius(taus)
    sgn = 1.0 if inner else -1.0

    if dj.velocity.effective_degree == 0:
        c0 = dj.velocity.coeffs[0]
        rj = c0 * taus + dj.radius0
        x = ri + sgn * rj
        a = v_max * v_max + c0 * c0
        b = sgn * 2.0 * x * c0 * v_max
        c = v_max * v_max * (x * x - L * L)
        disc = b * b - 4.0 * a * c
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        r_lo = (-b - sq) / (2 * a)
        r_hi = (-b + sq) / (2 * a)
        ell = np.where(r_lo >= -1e-12, np.maximum(r_lo, 0.0), np.where(r_hi >= -1e-12, np.maximum(r_hi, 0.0), np.nan))
    else:
        rj0 = dj.radius(taus)
        rad0 = L * L - (ri + sgn * rj0) ** 2
        feasible = rad0 >= 0
        with np.errstate(invalid="ignore"):
            ell = np.sqrt(np.where(feasible, rad0, np.nan))
        live = np.isfinite(ell)
        for _ in range(30):
            if not live.any():
                break
            arr = taus + ell / v_max
            s = ri + sgn * dj.radius(arr)
            rad = L * L - s * s
            with np.errstate(invalid="ignore"):
                nxt = np.sqrt(np.where(rad >= 0, rad, np.nan))
            delta = np.abs(nxt - ell)
            ell = np.where(live, nxt, ell)
            conv = np.where(np.isfinite(delta), delta, np.inf) <= FIXED_POINT_ATOL
            live = live & ~conv & np.isfinite(ell)
        # stragglers: vectorized first-sign-change bisection of F(l) = l - g(l)
        bad = feasible & (live | ~np.isfinite(ell))
        if bad.any():
            ell[bad] = _bisect_first_root_array(di, dj, inner, taus[bad], v_max, L, ri[bad] if np.ndim(ri) else np.full(int(bad.sum()), ri))

    # final residual certification
    with np.errstate(invalid="ignore"):
        arr = taus + ell / v_max
        s = ri + sgn * dj.radius(arr)
        rad = L * L - s * s
        resid = np.sqrt(np.where(rad >= -1e-12, np.maximum(rad, 0.0), np.nan)) - ell
        ok = np.abs(resid) <= RESIDUAL_RTOL * np.maximum(1.0, np.abs(ell))
    return np.where(ok, ell, np.nan)


@lru_cache(maxsize=4096)
def pair_length_table(di: Disc, dj: Disc, inner: bool, v_max: float,
                      lo: float, hi: float, n: int = 1025) -> tuple[np.ndarray, np.ndarray]:
    """Cached dense table of certified tangent lengths over [lo, hi].

    Left/right tangent kinds share lengths, so one table serves both departure
    curves of a pair.  Returned arrays must be treated as read-only.
    """
    ts = np.linspace(lo, hi, n)
    return ts, tangent_length_array(di, dj, inner, ts, v_max)


def interp_table(ts: np.ndarray, ys: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation that propagates NaN and NaNs outside the grid."""
    t = np.asarray(t, dtype=float)
    idx = np.clip(np.searchsorted(ts, t), 1, len(ts) - 1)
    x0, x1 = ts[idx - 1], ts[idx]
    y0, y1 = ys[idx - 1], ys[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (t - x0) / (x1 - x0)
        out = y0 + w * (y1 - y0)
    out = np.where((t < ts[0] - 1e-12) | (t > ts[-1] + 1e-12), np.nan, out)
    return out


# ---------------------------------------------------------------------------
# departure curves and tangent geometry
# ---------------------------------------------------------------------------

def _pair_frame(di: Disc, dj: Disc) -> tuple[float, tuple[float, float], tuple[float, float], float]:
    ox, oy = di.center
    px, py = dj.center
    L = math.hypot(px - ox, py - oy)
    if L == 0:
        raise ValueError("coincident disc centers")
    d = ((px - ox) / L, (py - oy) / L)
    dperp = (-d[1], d[0])  # left normal of the directed center line
    theta_ij = math.atan2(d[1], d[0])
    return L, d, dperp, theta_ij


def tangent_geometry(
    di: Disc,
    dj: Disc,
    kind: TangentKind,
    tau: float,
    v_max: float,
) -> Optional[tuple[tuple[float, float], tuple[float, float], float, float]]:
    """Departure point, arrival point, length, arrival time; None if no tangent."""
    sol = tangent_length(di, dj, kind.inner, tau, v_max)
    if sol is None:
        return None
    ell, arrival = sol
    L, d, dperp, _ = _pair_frame(di, dj)
    ri = di.radius(tau)
    rj = dj.radius(arrival)
    side = kind.side
    if kind.inner:
        s = ri + rj
        ux = (s / L) * d[0] + side * (ell / L) * dperp[0]
        uy = (s / L) * d[1] + side * (ell / L) * dperp[1]
        p = (di.center[0] + ri * ux, di.center[1] + ri * uy)
        q = (dj.center[0] - rj * ux, dj.center[1] - rj * uy)
    else:
        s = ri - rj
        ux = (s / L) * d[0] + side * (ell / L) * dperp[0]
        uy = (s / L) * d[1] + side * (ell / L) * dperp[1]
        p = (di.center[0] + ri * ux, di.center[1] + ri * uy)
        q = (dj.center[0] + rj * ux, dj.center[1] + rj * uy)
    return p, q, ell, arrival


def departure_theta(
    di: Disc, dj: Disc, kind: TangentKind, tau: float, v_max: float
) -> Optional[float]:
    """Polar angle of the departure point about o_i: theta_ij +/- delta(tau).

    delta = atan2(len, r_i + r_j') for inner tangents and atan2(len, r_i - r_j')
    for outer ones, which keeps the correct branch when the angle passes pi/2.
    """
    sol = tangent_length(di, dj, kind.inner, tau, v_max)
    if sol is None:
        return None
    ell, arrival = sol
    _, _, _, theta_ij = _pair_frame(di, dj)
    ri = di.radius(tau)
    rj = dj.radius(arrival)
    delta = math.atan2(ell, ri + rj) if kind.inner else math.atan2(ell, ri - rj)
    return theta_ij + kind.side * delta


def departure_theta_array(
    di: Disc, dj: Disc, kind: TangentKind, taus: np.ndarray, v_max: float
) -> np.ndarray:
    """Vectorized departure-curve angle (NaN where the tangent does not exist)."""
    taus = np.asarray(taus, dtype=float)
    ell = tangent_length_array(di, dj, kind.inner, taus, v_max)
    _, _, _, theta_ij = _pair_frame(di, dj)
    ri = di.radius(taus)
    rj = dj.radius(taus + ell / v_max)
    base = ri + rj if kind.inner else ri - rj
    return theta_ij + kind.side * np.arctan2(ell, base)


def departure_theta_from_table(
    di: Disc, dj: Disc, kind: TangentKind, ts: np.ndarray, v_max: float,
    table: tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """Departure curve angle with lengths taken from a cached pair table.

    Fast path for root discovery; final roots are always re-certified with
    exact evaluations.
    """
    ts = np.asarray(ts, dtype=float)
    ell = interp_table(table[0], table[1], ts)
    _, _, _, theta_ij = _pair_frame(di, dj)
    ri = di.radius(ts)
    with np.errstate(invalid="ignore"):
        rj = dj.radius(ts + ell / v_max)
        base = ri + rj if kind.inner else ri - rj
        return theta_ij + kind.side * np.arctan2(ell, base)


def departure_position(
    di: Disc, dj: Disc, kind: TangentKind, tau: float, v_max: float
) -> tuple[float, float]:
    geo = tangent_geometry(di, dj, kind, tau, v_max)
    if geo is None:
        raise DomainError(f"no {kind.value} tangent from disc {di.id} to {dj.id} at tau={tau}")
    return geo[0]


# ---------------------------------------------------------------------------
# tangent existence domains
# ---------------------------------------------------------------------------

def compute_pair_domain(
    di: Disc,
    dj: Disc,
    inner: bool,
    v_max: float,
    horizon: float,
    samples: int = 2049,
) -> tuple[tuple[float, float], ...]:
    """Departure times in [0, horizon] where the tangent geometrically exists.

    Arrival past the horizon is a per-query concern handled by the weight
    function, not a domain restriction.  Transitions are located by bisection
    to 1e-10; the result may be a union of intervals, stored sorted.
    """
    grid = np.linspace(0.0, horizon, samples)
    ell = tangent_length_array(di, dj, inner, grid, v_max)
    ok = np.isfinite(ell)

    def exists(t: float) -> bool:
        return tangent_length(di, dj, inner, t, v_max) is not None

    intervals: list[tuple[float, float]] = []
    start: Optional[float] = None
    for k in range(len(grid)):
        if ok[k] and start is None:
            t0 = grid[k]
            if k > 0:
                lo, hi = grid[k - 1], grid[k]
                while hi - lo > DOMAIN_BISECT_TOL:
                    mid = 0.5 * (lo + hi)
                    if exists(mid):
                        hi = mid
                    else:
                        lo = mid
                t0 = hi
            start = t0
        elif not ok[k] and start is not None:
            lo, hi = grid[k - 1], grid[k]
            while hi - lo > DOMAIN_BISECT_TOL:
                mid = 0.5 * (lo + hi)
                if exists(mid):
                    lo = mid
                else:
                    hi = mid
            intervals.append((start, lo))
            start = None
    if start is not None:
        intervals.append((start, float(grid[-1])))
    return tuple((float(a), float(b)) for a, b in intervals if b - a > DOMAIN_BISECT_TOL)


def in_domain(edge: TangentEdge, tau: float, tol: float = 1e-12) -> bool:
    for a, b in edge.domain:
        if a - tol <= tau <= b + tol:
            return True
    return False


def tangent_leg(edge: TangentEdge, tau: float, v_max: float) -> Leg:
    """Materialize the timed straight leg for (edge, tau)."""
    if not in_domain(edge, tau):
        raise DomainError(f"tau={tau} outside domain of edge {edge.id}")
    geo = tangent_geometry(edge.di, edge.dj, edge.kind, tau, v_max)
    if geo is None:
        raise DomainError(f"edge {edge.id} has no tangent at tau={tau}")
    p, q, ell, arrival = geo
    return Leg(kind="tangent", t_start=tau, t_end=arrival, start=p, end=q)


# ---------------------------------------------------------------------------
# spirals
# ---------------------------------------------------------------------------

def _wrap_pm_pi(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class SpiralHit:
    target_key: object
    t_meet: float
    samples: tuple[tuple[float, float, float], ...]  # (t, x, y) along the arc


def _angular_rate_coeffs(disc: Disc, v_max: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(ts: np.ndarray) -> np.ndarray:
        rate = disc.radius_rate(ts)
        r = disc.radius(ts)
        rad = v_max * v_max - rate * rate
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where((rad >= 0) & (r > 0), np.sqrt(np.maximum(rad, 0.0)) / r, np.nan)
    return f


def _integrate_phi(disc: Disc, v_max: float, t0: float, t1: float, phi0: float,
                   direction: int, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Angles at RK4 nodes for d(phi)/dt = dir * sqrt(v_max^2 - r'(t)^2) / r(t).

    The rate is independent of phi, so classical fixed-step RK4 reduces to the
    Simpson rule per step; computed cumulatively and vectorized.
    """
    ts = np.linspace(t0, t1, n_steps + 1)
    mids = 0.5 * (ts[:-1] + ts[1:])
    f = _angular_rate_coeffs(disc, v_max)
    f_nodes = f(ts)
    f_mids = f(mids)
    h = (t1 - t0) / n_steps
    increments = direction * (h / 6.0) * (f_nodes[:-1] + 4.0 * f_mids + f_nodes[1:])
    phis = phi0 + np.concatenate([[0.0], np.cumsum(increments)])
    return ts, phis


def _spiral_infeasible_time(disc: Disc, v_max: float, t0: float, t1: float) -> Optional[float]:
    """Earliest time in [t0, t1] where the boundary outruns the robot, if any."""
    ts = np.linspace(t0, t1, 257)
    bad = np.abs(disc.radius_rate(ts)) >= v_max
    if not bad.any():
        return None
    k = int(np.argmax(bad))
    return float(ts[k])


class SpiralTarget:
    """An angle function theta(t) (with domain intervals) raced against the robot."""

    def __init__(self, key, theta_fn: Callable[[np.ndarray], np.ndarray],
                 domain: tuple[tuple[float, float], ...],
                 theta_scalar_fn: Optional[Callable[[float], Optional[float]]] = None):
        self.key = key
        self.theta_fn = theta_fn
        self.domain = domain
        self.theta_scalar_fn = theta_scalar_fn

    def theta(self, ts: np.ndarray) -> np.ndarray:
        out = self.theta_fn(np.asarray(ts, dtype=float))
        mask = np.zeros(out.shape, dtype=bool)
        tarr = np.asarray(ts, dtype=float)
        for a, b in self.domain:
            mask |= (tarr >= a - 1e-12) & (tarr <= b + 1e-12)
        return np.where(mask, out, np.nan)

    def theta_scalar(self, t: float) -> float:
        if not any(a - 1e-12 <= t <= b + 1e-12 for a, b in self.domain):
            return math.nan
        if self.theta_scalar_fn is not None:
            v = self.theta_scalar_fn(t)
            return math.nan if v is None else v
        return float(self.theta_fn(np.asarray([t]))[0])


def race_spiral(
    disc: Disc,
    v_max: float,
    horizon: float,
    tau: float,
    start_angle: float,
    direction: int,
    targets: Sequence[SpiralTarget],
    h_cap: float = 0.01,
) -> Optional[SpiralHit]:
    """First meeting of the on-boundary robot with any target angle, one direction.

    Returns None when no target is met before the horizon (including when the
    boundary growth rate reaches v_max, which pins the robot).
    """
    hit = _immediate_meet(disc, tau, start_angle, targets)
    if hit is not None:
        return hit
    if not targets:
        return None
    duration = max(horizon - tau, 0.0)
    if duration <= 0:
        return None

    t_bad = _spiral_infeasible_time(disc, v_max, tau, horizon)
    t_stop = horizon if t_bad is None else t_bad
    # no target exists past the end of the last live domain
    last_domain_end = max((b for tgt in targets for _, b in tgt.domain), default=tau)
    t_stop = min(t_stop, last_domain_end)
    if t_stop - tau <= 0:
        return None

    r0 = disc.radius(tau)
    h = min(h_cap, duration / 64.0)
    if r0 > 0:
        h = min(h, 0.2 * r0 / v_max)  # keep per-step angle change well under pi
    h = max(h, duration / 2_000_000)

    n = max(int(math.ceil((t_stop - tau) / h)), 2)
    ts, phis = _integrate_phi(disc, v_max, tau, t_stop, start_angle, direction, n)

    # coarse pass: first candidate bracket per target; refine only the earliest
    coarse: list[tuple[int, SpiralTarget, tuple]] = []
    for tgt in targets:
        masks = _crossing_masks(ts, phis, tgt)
        candidates = np.nonzero(masks[2] | masks[3])[0]
        if len(candidates):
            coarse.append((int(candidates[0]), tgt, masks))
    if not coarse:
        return None
    k_min = min(k for k, _, _ in coarse)
    best: Optional[tuple[float, SpiralTarget, float]] = None
    for k, tgt, masks in coarse:
        if k != k_min:
            continue
        found = _refine_crossing(disc, v_max, direction, ts, phis, k, tgt, masks)
        if found is None:
            continue
        t_hit, theta_hit = found
        if best is None or t_hit < best[0] or (t_hit == best[0] and str(tgt.key) < str(best[1].key)):
            best = (t_hit, tgt, theta_hit)
    if best is None:
        return None
    t_meet, tgt, theta_end = best
    k = int(np.searchsorted(ts, t_meet))
    samples: list[tuple[float, float, float]] = [(tau, *_polar(disc, tau, start_angle))]
    for t_i, phi_i in zip(ts[1:k], phis[1:k]):
        samples.append((float(t_i), *_polar(disc, float(t_i), float(phi_i))))
    samples.append((t_meet, *_polar(disc, t_meet, theta_end)))
    return SpiralHit(target_key=tgt.key, t_meet=t_meet, samples=tuple(samples))


def _polar(disc: Disc, t: float, angle: float) -> tuple[float, float]:
    r = disc.radius(t)
    return (disc.center[0] + r * math.cos(angle), disc.center[1] + r * math.sin(angle))


def _immediate_meet(disc: Disc, tau: float, start_angle: float,
                    targets: Sequence[SpiralTarget]) -> Optional[SpiralHit]:
    for tgt in sorted(targets, key=lambda t: str(t.key)):
        th = tgt.theta_scalar(tau)
        if math.isfinite(th) and abs(_wrap_pm_pi(th - start_angle)) < 1e-12:
            pos = _polar(disc, tau, th)
            return SpiralHit(target_key=tgt.key, t_meet=tau, samples=((tau, *pos),))
    return None


def _phi_scalar(disc: Disc, v_max: float, t0: float, phi0: float, direction: int, t: float) -> float:
    """Robot angle at t from (t0, phi0) by a short composite-Simpson step."""
    if t == t0:
        return phi0
    n = 4
    hs = (t - t0) / n
    acc = phi0
    for k in range(n):
        a = t0 + k * hs
        b = a + hs
        m = 0.5 * (a + b)

        def f(x: float) -> float:
            rate = float(disc.radius_rate(x))
            r = float(disc.radius(x))
            rad = v_max * v_max - rate * rate
            if rad < 0 or r <= 0:
                return math.nan
            return math.sqrt(rad) / r

        acc += direction * (hs / 6.0) * (f(a) + 4.0 * f(m) + f(b))
    return acc


def _crossing_masks(ts: np.ndarray, phis: np.ndarray, tgt: SpiralTarget):
    th = tgt.theta(ts)
    psi = th - phis
    # work on the wrapped relative angle; steps are small so |d(psi)| << pi
    with np.errstate(invalid="ignore"):
        w = (psi + math.pi) % (2.0 * math.pi) - math.pi
    fin = np.isfinite(w)
    valid = fin[1:] & fin[:-1]
    a, b = w[:-1], w[1:]
    with np.errstate(invalid="ignore"):
        hits = valid & (np.abs(b) < 1e-12)
        flips = valid & (a != 0.0) & ((a < 0) != (b < 0)) & (np.abs(b - a) < math.pi)
    return th, w, hits, flips


def _refine_crossing(
    disc: Disc,
    v_max: float,
    direction: int,
    ts: np.ndarray,
    phis: np.ndarray,
    bracket: int,
    tgt: SpiralTarget,
    masks: tuple,
) -> Optional[tuple[float, float]]:
    """(time, target angle) of the crossing inside the given step interval."""
    th, w, hits, flips = masks
    k = bracket + 1
    if hits[bracket]:
        return float(ts[k]), float(th[k])
    if not flips[bracket]:
        return None
    lo, hi = float(ts[k - 1]), float(ts[k])
    t_node, phi_node = float(ts[k - 1]), float(phis[k - 1])
    wa = float(w[k - 1])
    while hi - lo > SPIRAL_EVENT_TOL:
        mid = 0.5 * (lo + hi)
        tm = tgt.theta_scalar(mid)
        if not math.isfinite(tm):
            hi = mid
            continue
        wm = _wrap_pm_pi(tm - _phi_scalar(disc, v_max, t_node, phi_node, direction, mid))
        if wm == 0.0:
            lo = hi = mid
            break
        if (wa < 0) == (wm < 0):
            lo = mid
        else:
            hi = mid
    t_hit = 0.5 * (lo + hi)
    th_hit = tgt.theta_scalar(t_hit)
    if not math.isfinite(th_hit):
        th_hit = float(th[k])
    return t_hit, th_hit


def spiral_to_angle(
    disc: Disc,
    v_max: float,
    horizon: float,
    tau: float,
    start_angle: float,
    direction: str,
    theta_fn: Callable[[np.ndarray], np.ndarray],
    domain: tuple[tuple[float, float], ...] = (),
) -> Optional[SpiralHit]:
    """Traverse the boundary from start_angle at tau until theta_fn is met.

    direction is "cw" or "ccw"; returns the first meeting or None (no-meet).
    """
    sgn = 1 if direction == "ccw" else -1
    dom = domain if domain else ((0.0, horizon),)
    tgt = SpiralTarget("target", theta_fn, dom)
    return race_spiral(disc, v_max, horizon, tau, start_angle, sgn, [tgt])
