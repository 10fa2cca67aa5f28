"""Blocked-interval preprocessing for tangent edges, and the log-time query.

For each tangent edge the departure-curve intersection events of its source
disc are scanned in time order.  At an event whose aligned partner path is
shorter, the partner's target disc starts or stops covering the leg, so the
set of covering discs is toggled; maximal blocked intervals are emitted when
that set empties.  The initial covering set comes from the direct geometric
check, which doubles as the test oracle for the whole data structure.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .arrangement import IntersectionSequence
from .kinematics import Leg, TangentEdge, tangent_geometry, tangent_leg, in_domain
from .scene import Disc, Scene

__all__ = [
    "BlockedSequence",
    "blocked_set",
    "is_blocked",
    "leg_min_clearance",
    "leg_blocked_direct",
    "per_disc_clearance",
]

ALIGN_CROSS_TOL = 1e-8        # |sin(angle)| between aligned leg directions
BLOCK_PENETRATION_TOL = 1e-9  # clearance below -tol counts as blocked
CLEARANCE_SAMPLES = 1000


@dataclass(frozen=True)
class BlockedSequence:
    """Sorted disjoint closed intervals of departure times where a leg is blocked."""

    edge_id: int
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        starts = [a for a, _ in self.intervals]
        if starts != sorted(starts):
            raise ValueError("blocked intervals must be sorted by lower endpoint")
        for (a0, b0), (a1, _) in zip(self.intervals, self.intervals[1:]):
            if a1 < b0:
                raise ValueError("blocked intervals must be disjoint")


def leg_min_clearance(
    scene: Scene,
    leg: Leg,
    exclude: Iterable[int] = (),
    samples: int = CLEARANCE_SAMPLES,
    refine: bool = True,
) -> float:
    """Minimum signed clearance of the moving robot point against the discs.

    Negative values are penetration depth.  Sampled densely along the leg with
    a local parabolic-style refinement around the minimum.
    """
    excluded = set(exclude)
    discs = [d for d in scene.discs if d.id not in excluded]
    if not discs or leg.t_end <= leg.t_start:
        if not discs:
            return math.inf
        ts = np.asarray([leg.t_start])
    else:
        ts = np.linspace(leg.t_start, leg.t_end, samples)
    pos = leg.positions(ts)

    best = math.inf
    best_t = leg.t_start
    best_disc: Optional[Disc] = None
    for d in discs:
        gap = np.hypot(pos[:, 0] - d.center[0], pos[:, 1] - d.center[1]) - d.radius(ts)
        k = int(np.argmin(gap))
        if gap[k] < best:
            best = float(gap[k])
            best_t = float(ts[k])
            best_disc = d
    if not refine or best_disc is None or leg.t_end <= leg.t_start:
        return best

    # local refinement: ternary search in a one-sample-wide bracket
    span = (leg.t_end - leg.t_start) / max(samples - 1, 1)
    lo = max(leg.t_start, best_t - span)
    hi = min(leg.t_end, best_t + span)

    def gap_at(t: float) -> float:
        x, y = leg.position(t)
        return math.dist((x, y), best_disc.center) - float(best_disc.radius(t))

    for _ in range(60):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if gap_at(m1) < gap_at(m2):
            hi = m2
        else:
            lo = m1
    return min(best, gap_at(0.5 * (lo + hi)))


def leg_blocked_direct(scene: Scene, leg: Leg, exclude: Iterable[int] = (),
                       samples: int = CLEARANCE_SAMPLES) -> bool:
    return leg_min_clearance(scene, leg, exclude, samples) < -BLOCK_PENETRATION_TOL


def per_disc_clearance(scene: Scene, leg: Leg, exclude: Iterable[int] = (),
                       samples: int = CLEARANCE_SAMPLES) -> dict[int, float]:
    """Minimum signed clearance against each disc separately (one sampling pass)."""
    excluded = set(exclude)
    if leg.t_end <= leg.t_start:
        ts = np.asarray([leg.t_start])
    else:
        ts = np.linspace(leg.t_start, leg.t_end, samples)
    pos = leg.positions(ts)
    out: dict[int, float] = {}
    for d in scene.discs:
        if d.id in excluded:
            continue
        gap = np.hypot(pos[:, 0] - d.center[0], pos[:, 1] - d.center[1]) - d.radius(ts)
        out[d.id] = float(gap.min())
    return out


def _covering_discs(scene: Scene, edge: TangentEdge, tau: float) -> set[int]:
    """Discs (other than the edge's endpoints) currently intersecting the leg."""
    leg = tangent_leg(edge, tau, scene.v_max)
    gaps = per_disc_clearance(scene, leg, exclude=(edge.from_disc, edge.to_disc))
    return {disc_id for disc_id, g in gaps.items() if g < -BLOCK_PENETRATION_TOL}


def _aligned_and_shorter(scene: Scene, edge: TangentEdge, partner: TangentEdge,
                         t: float) -> Optional[bool]:
    """None if the paths are not aligned at t; otherwise len(partner) < len(edge)."""
    geo_e = tangent_geometry(edge.di, edge.dj, edge.kind, t, scene.v_max)
    geo_p = tangent_geometry(partner.di, partner.dj, partner.kind, t, scene.v_max)
    if geo_e is None or geo_p is None:
        return None
    pe, qe, le, _ = geo_e
    pp, qp, lp, _ = geo_p
    if le <= 0 or lp <= 0:
        return None
    ux, uy = (qe[0] - pe[0]) / le, (qe[1] - pe[1]) / le
    vx, vy = (qp[0] - pp[0]) / lp, (qp[1] - pp[1]) / lp
    cross = ux * vy - uy * vx
    dot = ux * vx + uy * vy
    if abs(cross) > ALIGN_CROSS_TOL or dot <= 0:
        return None
    return lp < le


def blocked_set(
    scene: Scene,
    edges: Sequence[TangentEdge],
    sequences: dict[int, IntersectionSequence],
) -> dict[int, BlockedSequence]:
    """Maximal blocked intervals for every tangent edge, per the event scan.

    Intervals still open when the edge's domain interval ends are closed there
    (at the horizon for edges that live through it).
    """
    edge_by_id = {e.id: e for e in edges}
    out: dict[int, BlockedSequence] = {}
    for e in edges:
        intervals: list[tuple[float, float]] = []
        seq = sequences.get(e.id)
        events = seq.events if seq is not None else []
        for d0, d1 in e.domain:
            covering = _covering_discs(scene, e, d0)
            low = d0 if covering else None
            for ev in events:
                t = ev.time
                if t <= d0 + 1e-12 or t > d1 + 1e-12:
                    continue
                partner_id = ev.edge_b if ev.edge_a == e.id else ev.edge_a
                partner = edge_by_id[partner_id]
                u = partner.to_disc
                if u == e.to_disc:
                    continue  # the edge's own target disc is not a third-party blocker
                verdict = _aligned_and_shorter(scene, e, partner, t)
                if verdict is None or not verdict:
                    continue  # pure arrangement crossing, or graze beyond the arrival
                if u in covering:
                    covering.discard(u)
                    if not covering:
                        assert low is not None
                        intervals.append((low, t))
                        low = None
                else:
                    if not covering:
                        low = t
                    covering.add(u)
            if covering:
                assert low is not None
                intervals.append((low, d1))
        intervals.sort()
        out[e.id] = BlockedSequence(edge_id=e.id, intervals=tuple(intervals))
    return out


def is_blocked(bseq: BlockedSequence, tau: float) -> bool:
    """Closed-interval membership by binary search (endpoint grazing is blocked)."""
    starts = [a for a, _ in bseq.intervals]
    k = bisect.bisect_right(starts, tau)
    if k == 0:
        return False
    a, b = bseq.intervals[k - 1]
    return a <= tau <= b
