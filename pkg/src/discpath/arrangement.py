"""Per-disc arrangements of departure curves.

Each disc carries one departure curve per tangent edge leaving it.  Two curves
on the same disc always sit at the same radius at the same time, so they
intersect exactly when their polar angles coincide (mod 2pi).  The sweep
processes time like a growing circle front: the status is the cyclic angular
order of the live curves, and events are domain starts/ends plus adjacent-pair
angle coincidences.  ``curve_intersections`` is the independent all-pairs
route used to cross-check the sweep.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .kinematics import (
    TangentEdge,
    departure_theta,
    departure_theta_array,
    departure_theta_from_table,
    pair_length_table,
)
from .scene import Disc, Scene

__all__ = [
    "Curve",
    "IntersectionEvent",
    "IntersectionSequence",
    "curve_intersections",
    "sweep_disc",
    "build_intersection_set",
    "pairwise_root_bound",
]

ROOT_ANGLE_TOL = 1e-9      # certification: |theta_a - theta_b| at a root (mod 2pi)
ROOT_TIME_TOL = 1e-12      # bisection resolution for crossing times
DEDUP_TIME_TOL = 1e-9      # identical roots within this are one crossing
TOUCH_ANGLE_TOL = 1e-7     # near-tangential dips probed for touching crossings
COINCIDE_TOL = 1e-11       # curves equal within this over a stretch: degenerate overlap


def _wrap_pm_pi(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _wrap_array(a: np.ndarray) -> np.ndarray:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Curve:
    """Departure curve of one tangent edge, living on the edge's source disc."""

    edge: TangentEdge
    v_max: float

    @property
    def key(self) -> int:
        return self.edge.id

    def theta(self, ts: np.ndarray) -> np.ndarray:
        return departure_theta_array(self.edge.di, self.edge.dj, self.edge.kind,
                                     np.asarray(ts, dtype=float), self.v_max)

    def theta_fast(self, ts: np.ndarray) -> np.ndarray:
        """Interpolated-table angles; discovery only, roots re-certified exactly."""
        e = self.edge
        if not e.domain:
            return np.full(np.asarray(ts).shape, np.nan)
        table = pair_length_table(e.di, e.dj, e.kind.inner, self.v_max,
                                  e.domain[0][0], e.domain[-1][1])
        return departure_theta_from_table(e.di, e.dj, e.kind, ts, self.v_max, table)

    def theta_scalar(self, t: float) -> float:
        th = departure_theta(self.edge.di, self.edge.dj, self.edge.kind, t, self.v_max)
        return math.nan if th is None else th


@dataclass(frozen=True)
class IntersectionEvent:
    time: float
    edge_a: int
    edge_b: int
    position: tuple[float, float]

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.edge_a, self.edge_b), max(self.edge_a, self.edge_b))


@dataclass
class IntersectionSequence:
    """Time-ascending intersections of one departure curve with its disc's others."""

    edge_id: int
    events: list[IntersectionEvent] = field(default_factory=list)


def pairwise_root_bound(curve_a: Curve, curve_b: Curve) -> int:
    """Upper bound 16*beta + 8 on the number of pairwise crossings."""
    beta = max(
        curve_a.edge.di.velocity.effective_degree,
        curve_a.edge.dj.velocity.effective_degree,
        curve_b.edge.dj.velocity.effective_degree,
    )
    return 16 * beta + 8


def _overlap_intervals(a: TangentEdge, b: TangentEdge) -> list[tuple[float, float]]:
    out = []
    for a0, a1 in a.domain:
        for b0, b1 in b.domain:
            lo, hi = max(a0, b0), min(a1, b1)
            if hi - lo > 1e-12:
                out.append((lo, hi))
    return out


def _event_at(curve_a: Curve, curve_b: Curve, t: float) -> IntersectionEvent:
    disc = curve_a.edge.di
    th = curve_a.theta_scalar(t)
    if not math.isfinite(th):
        th = curve_b.theta_scalar(t)
    r = disc.radius(t)
    pos = (disc.center[0] + r * math.cos(th), disc.center[1] + r * math.sin(th))
    return IntersectionEvent(time=t, edge_a=curve_a.key, edge_b=curve_b.key, position=pos)


def _certified(curve_a: Curve, curve_b: Curve, t: float) -> bool:
    da = curve_a.theta_scalar(t)
    db = curve_b.theta_scalar(t)
    return math.isfinite(da) and math.isfinite(db) and abs(_wrap_pm_pi(da - db)) < ROOT_ANGLE_TOL


def _transversal(curve_a: Curve, curve_b: Curve, t: float, dt: float = 1e-7) -> bool:
    """Whether the angular order of the two curves actually flips at the root."""
    before = _wrap_pm_pi(curve_a.theta_scalar(t - dt) - curve_b.theta_scalar(t - dt))
    after = _wrap_pm_pi(curve_a.theta_scalar(t + dt) - curve_b.theta_scalar(t + dt))
    if not (math.isfinite(before) and math.isfinite(after)):
        return True
    return (before < 0) != (after < 0)


def _bisect_root(f, lo: float, hi: float) -> float:
    flo = f(lo)
    for _ in range(200):
        if hi - lo <= ROOT_TIME_TOL:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _refine_root_exact(f, lo: float, hi: float, bound_lo: float, bound_hi: float,
                       step: float) -> Optional[float]:
    """Exact root near an interpolation-discovered bracket.

    Interpolated tables can displace a bracket by a few scan steps where the
    curve is steep (a vanishing tangent), so the exact function is re-scanned
    over a widened window before bisecting; touching roots resolve to the
    |f| minimum when it certifies.
    """
    a = max(bound_lo, lo - 8.0 * step)
    b = min(bound_hi, hi + 8.0 * step)
    if not b > a:
        return None
    xs = np.linspace(a, b, 65)
    prev: Optional[tuple[float, float]] = None
    best_touch: Optional[tuple[float, float]] = None
    for x in xs:
        v = f(float(x))
        if v is None or not math.isfinite(v):
            prev = None
            continue
        if v == 0.0:
            return float(x)
        if best_touch is None or abs(v) < best_touch[1]:
            best_touch = (float(x), abs(v))
        if prev is not None and (prev[1] < 0) != (v < 0):
            return _bisect_root(f, prev[0], float(x))
        prev = (float(x), v)
    if best_touch is not None and best_touch[1] < TOUCH_ANGLE_TOL:
        # golden-section polish of the |f| dip
        lo_g = max(a, best_touch[0] - (b - a) / 64)
        hi_g = min(b, best_touch[0] + (b - a) / 64)
        for _ in range(80):
            m1 = lo_g + (hi_g - lo_g) / 3
            m2 = hi_g - (hi_g - lo_g) / 3
            v1, v2 = f(m1), f(m2)
            v1 = math.inf if v1 is None or not math.isfinite(v1) else abs(v1)
            v2 = math.inf if v2 is None or not math.isfinite(v2) else abs(v2)
            if v1 < v2:
                hi_g = m2
            else:
                lo_g = m1
        x = 0.5 * (lo_g + hi_g)
        v = f(x)
        if v is not None and math.isfinite(v) and abs(v) < ROOT_ANGLE_TOL:
            return x
    return None


def _plateau_mask(g: np.ndarray, finite: np.ndarray) -> np.ndarray:
    """Samples inside a run (>= 2 samples) where the curves coincide.

    Such stretches are degenerate overlaps (e.g. parallel outer tangents of
    equal collinear discs), not transversal crossings; they yield no events.
    """
    z = finite & (np.abs(g) <= COINCIDE_TOL)
    run = np.zeros_like(z)
    run[1:] |= z[1:] & z[:-1]
    run[:-1] |= z[:-1] & z[1:]
    return run


def curve_intersections(curve_a: Curve, curve_b: Curve, samples: int = 512) -> list[float]:
    """All certified times where the two curves coincide, by dense scan + bisection.

    The scan walks the continuous lift of theta_a - theta_b over each domain
    overlap and roots every multiple of 2pi in range; near-tangential dips get
    a x4 refined rescan so touching crossings are counted once.  Stretches
    where the curves are identical contribute no events.
    """
    if curve_a.key == curve_b.key:
        raise ValueError("a curve has no intersections with itself")
    roots: list[float] = []
    for lo, hi in _overlap_intervals(curve_a.edge, curve_b.edge):
        ts = np.linspace(lo, hi, samples)
        diff = curve_a.theta_fast(ts) - curve_b.theta_fast(ts)
        finite = np.isfinite(diff)
        if not finite.any():
            continue

        def f_for(k2pi: float):
            def f(t: float) -> float:
                return (curve_a.theta_scalar(t) - curve_b.theta_scalar(t)) - k2pi
            return f

        step = (hi - lo) / (samples - 1)
        lo_k = int(math.floor(np.nanmin(diff) / (2 * math.pi)))
        hi_k = int(math.ceil(np.nanmax(diff) / (2 * math.pi)))
        for k in range(lo_k, hi_k + 1):
            target = 2 * math.pi * k
            g = diff - target
            plateau = _plateau_mask(g, finite)
            if plateau.all():
                continue
            for i in range(1, len(ts)):
                if not (finite[i - 1] and finite[i]) or plateau[i - 1] or plateau[i]:
                    continue
                a, b = g[i - 1], g[i]
                if abs(a) <= COINCIDE_TOL:
                    roots.append(float(ts[i - 1]))
                elif (a < 0 < b) or (b < 0 < a):
                    r = _refine_root_exact(f_for(target), float(ts[i - 1]), float(ts[i]), lo, hi, step)
                    if r is not None:
                        roots.append(r)
            if finite[-1] and not plateau[-1] and abs(g[-1]) <= COINCIDE_TOL:
                roots.append(float(ts[-1]))
            if finite[0] and not plateau[0] and abs(g[0]) <= COINCIDE_TOL:
                roots.append(float(ts[0]))
            # near-tangential dips: probe the exact function around the minimum
            absg = np.where(finite, np.abs(g), np.inf)
            for i in range(1, len(ts) - 1):
                if plateau[i]:
                    continue
                if absg[i] < TOUCH_ANGLE_TOL and absg[i] <= absg[i - 1] and absg[i] <= absg[i + 1]:
                    r = _refine_root_exact(f_for(target), float(ts[i - 1]), float(ts[i + 1]), lo, hi, step)
                    if r is not None:
                        roots.append(r)
    # crossings sitting exactly on a curve's domain boundary are degenerate
    # (typically the two tangents of a vanishing pair collapsing together) and
    # carry no blocking information: domain intervals are treated as open
    boundaries = [t for e in (curve_a.edge, curve_b.edge) for ab in e.domain for t in ab]
    certified = sorted(
        t for t in roots
        if _certified(curve_a, curve_b, t)
        and all(abs(t - b) > DEDUP_TIME_TOL for b in boundaries)
    )
    out: list[float] = []
    for t in certified:
        if not out or t - out[-1] > DEDUP_TIME_TOL:
            out.append(t)
    return out


# ---------------------------------------------------------------------------
# circular sweep
# ---------------------------------------------------------------------------

class _Status:
    """Cyclic angular order of live curves; adjacency only changes at events."""

    def __init__(self):
        self.order: list[int] = []  # curve keys, CCW by angle

    def insert(self, key: int, angle_of) -> None:
        if not self.order:
            self.order.append(key)
            return
        a_new = angle_of(key) % (2 * math.pi)
        angles = [(angle_of(k) % (2 * math.pi)) for k in self.order]
        pos = 0
        while pos < len(angles) and (angles[pos], str(self.order[pos])) < (a_new, str(key)):
            pos += 1
        self.order.insert(pos, key)

    def remove(self, key: int) -> None:
        self.order.remove(key)

    def neighbors(self, key: int) -> list[tuple[int, int]]:
        """Adjacent (ccw-ordered) pairs that involve key."""
        n = len(self.order)
        if n < 2:
            return []
        i = self.order.index(key)
        prev = self.order[(i - 1) % n]
        nxt = self.order[(i + 1) % n]
        pairs = [(prev, key), (key, nxt)]
        return [p for p in pairs if p[0] != p[1]]

    def adjacent(self, a: int, b: int) -> bool:
        n = len(self.order)
        if n < 2 or a not in self.order or b not in self.order:
            return False
        i = self.order.index(a)
        return self.order[(i + 1) % n] == b or self.order[(i - 1) % n] == b

    def swap(self, a: int, b: int) -> None:
        i, j = self.order.index(a), self.order.index(b)
        self.order[i], self.order[j] = self.order[j], self.order[i]

    def resort(self, angle_of) -> None:
        self.order.sort(key=lambda k: ((angle_of(k) % (2 * math.pi)), str(k)))


def _next_pair_crossing(
    curve_a: Curve, curve_b: Curve, after: float, samples: int = 1024
) -> Optional[float]:
    """Earliest certified coincidence strictly after ``after`` (domain-interior only)."""
    best: Optional[float] = None
    boundaries = [t for e in (curve_a.edge, curve_b.edge) for ab in e.domain for t in ab]
    for lo, hi in _overlap_intervals(curve_a.edge, curve_b.edge):
        lo = max(lo, after)
        if hi - lo <= 1e-12:
            continue
        ts = np.linspace(lo, hi, samples)
        w = _wrap_array(curve_a.theta_fast(ts) - curve_b.theta_fast(ts))
        fin = np.isfinite(w)
        plateau = _plateau_mask(w, fin)
        usable = fin & ~plateau
        valid = usable[1:] & usable[:-1]
        a, b = w[:-1], w[1:]
        with np.errstate(invalid="ignore"):
            exact = valid & ((np.abs(b) <= COINCIDE_TOL) | (np.abs(a) <= COINCIDE_TOL))
            flips = valid & ((a < 0) != (b < 0)) & (np.abs(b - a) < math.pi)
            dips = valid & (np.abs(b) < TOUCH_ANGLE_TOL) & (np.abs(a) < TOUCH_ANGLE_TOL) \
                & (np.abs(b) <= np.abs(a))
        found = None
        for idx in np.nonzero(exact | flips | dips)[0]:
            i = int(idx) + 1
            t_root = None
            if exact[idx]:
                t_root = float(ts[i]) if abs(w[i]) <= COINCIDE_TOL else float(ts[i - 1])
            elif flips[idx]:
                def f(t: float) -> float:
                    return _wrap_pm_pi(curve_a.theta_scalar(t) - curve_b.theta_scalar(t))
                t_root = _bisect_root(f, float(ts[i - 1]), float(ts[i]))
            else:
                # possible touching dip; probe with a refined local scan
                sub = np.linspace(ts[max(i - 2, 0)], ts[min(i + 2, len(ts) - 1)], 257)
                wd = _wrap_array(curve_a.theta_fast(sub) - curve_b.theta_fast(sub))
                fin_sub = np.isfinite(wd)
                sub_plateau = _plateau_mask(wd, fin_sub)
                masked = np.where(fin_sub & ~sub_plateau, np.abs(wd), np.inf)
                k_min = int(np.argmin(masked))
                if masked[k_min] < ROOT_ANGLE_TOL:
                    t_root = float(sub[k_min])
            if (t_root is not None and t_root > after + 1e-12
                    and all(abs(t_root - bd) > DEDUP_TIME_TOL for bd in boundaries)
                    and _certified(curve_a, curve_b, t_root)):
                found = t_root
                break
        if found is not None and (best is None or found < best):
            best = found
    return best


def sweep_disc(scene: Scene, disc_id: int, edges: Sequence[TangentEdge],
               v_max: Optional[float] = None) -> dict[int, IntersectionSequence]:
    """Intersection sequences for every tangent edge departing the given disc.

    Kinetic circular sweep: the event queue holds curve appearances,
    disappearances, and adjacent-pair coincidence candidates; candidates are
    validated lazily at pop time.  Simultaneous events are processed as one
    batch followed by a reordering pass.
    """
    v = scene.v_max if v_max is None else v_max
    curves = {e.id: Curve(e, v) for e in edges if e.from_disc == disc_id and e.domain}
    seqs = {e.id: IntersectionSequence(edge_id=e.id) for e in edges if e.from_disc == disc_id}
    if len(curves) < 2:
        return seqs

    heap: list[tuple[float, int, str, tuple]] = []
    serial = 0

    def push(t: float, kind: str, payload: tuple) -> None:
        nonlocal serial
        heapq.heappush(heap, (t, serial, kind, payload))
        serial += 1

    for key, cv in sorted(curves.items()):
        for a, b in cv.edge.domain:
            push(a, "start", (key,))
            push(b, "end", (key,))

    status = _Status()
    recorded: set[tuple[int, int, int]] = set()  # (a, b, time-bucket)

    def angle_of_factory(t: float):
        def angle_of(key: int) -> float:
            th = curves[key].theta_scalar(t)
            if not math.isfinite(th):
                th = curves[key].theta_scalar(min(t + 1e-9, scene.horizon))
            return th if math.isfinite(th) else 0.0
        return angle_of

    def schedule_pair(a: int, b: int, after: float) -> None:
        t = _next_pair_crossing(curves[a], curves[b], after)
        if t is not None:
            push(t, "cross", (a, b))

    def record(a: int, b: int, t: float) -> None:
        lo, hi = min(a, b), max(a, b)
        bucket = int(round(t / DEDUP_TIME_TOL))
        for off in (-1, 0, 1):
            if (lo, hi, bucket + off) in recorded:
                return
        recorded.add((lo, hi, bucket))
        ev = _event_at(curves[a], curves[b], t)
        seqs[a].events.append(ev)
        seqs[b].events.append(ev)

    while heap:
        t0 = heap[0][0]
        batch = []
        while heap and heap[0][0] <= t0 + 1e-12:
            batch.append(heapq.heappop(heap))
        batch.sort(key=lambda e: ({"start": 0, "end": 1, "cross": 2}[e[2]], e[3]))
        touched: set[int] = set()
        for t, _, kind, payload in batch:
            if kind == "start":
                (key,) = payload
                status.insert(key, angle_of_factory(t + 1e-9))
                touched.add(key)
            elif kind == "end":
                (key,) = payload
                if key in status.order:
                    for p in status.neighbors(key):
                        touched.update(p)
                    status.remove(key)
                touched.discard(key)
            else:
                a, b = payload
                if not status.adjacent(a, b):
                    continue
                da = curves[a].theta_scalar(t)
                db = curves[b].theta_scalar(t)
                if not (math.isfinite(da) and math.isfinite(db)):
                    continue
                if abs(_wrap_pm_pi(da - db)) > 1e-6:
                    continue  # stale candidate
                record(a, b, t)
                if _transversal(curves[a], curves[b], t):
                    status.swap(a, b)
                touched.update((a, b))
        status.resort(angle_of_factory(t0 + 1e-9))
        for key in sorted(touched):
            if key not in status.order:
                continue
            for pa, pb in status.neighbors(key):
                schedule_pair(pa, pb, t0)

    for s in seqs.values():
        s.events.sort(key=lambda e: (e.time, e.pair))
    return seqs


def build_intersection_set(
    scene: Scene, edges: Sequence[TangentEdge]
) -> tuple[dict[int, IntersectionSequence], int]:
    """Union of per-disc sweeps plus the arrangement size k (unique crossings)."""
    all_seqs: dict[int, IntersectionSequence] = {}
    k = 0
    for disc in scene.discs:
        seqs = sweep_disc(scene, disc.id, edges)
        seen: set[tuple[int, int, int]] = set()
        for s in seqs.values():
            for ev in s.events:
                fp = (ev.pair[0], ev.pair[1], int(round(ev.time / DEDUP_TIME_TOL)))
                if fp not in seen:
                    seen.add(fp)
                    k += 1
        all_seqs.update(seqs)
    return all_seqs, k
