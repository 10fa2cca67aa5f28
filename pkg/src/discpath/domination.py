"""First-hit times of growing discs and the endpoint-domination test.

A point is dominated at time t when some disc other than the one it sits on
has already engulfed it.  Because radii never decrease, the first disc to
reach a point keeps it forever, so the first-hit time fully determines
point-in-free-space over time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .kinematics import TangentEdge, tangent_geometry
from .scene import Disc, Scene

__all__ = ["FirstHit", "first_hit", "point_dominated", "is_dominated"]

HIT_TIME_TOL = 1e-12
PENETRATION_TOL = 1e-9  # boundary contact within this band is not domination


@dataclass(frozen=True)
class FirstHit:
    disc_id: Optional[int]
    hit_time: float  # math.inf when no disc reaches the point by the horizon


def _disc_hit_time(disc: Disc, dist: float, horizon: float) -> Optional[float]:
    """Smallest t in [0, horizon] with r(t) == dist (r is nondecreasing)."""
    if disc.radius0 >= dist:
        return 0.0
    coeffs = disc.velocity.coeffs
    if disc.velocity.effective_degree == 0:
        c = coeffs[0]
        if c <= 0:
            return None
        t = (dist - disc.radius0) / c
        return t if t <= horizon else None
    if disc.radius(horizon) < dist:
        return None
    lo, hi = 0.0, horizon
    while hi - lo > HIT_TIME_TOL:
        mid = 0.5 * (lo + hi)
        if disc.radius(mid) >= dist:
            hi = mid
        else:
            lo = mid
    return hi


def first_hit(scene: Scene, x: tuple[float, float],
              exclude: Iterable[int] = ()) -> FirstHit:
    """The first disc to cover point x, and when; (None, inf) if none by the horizon."""
    excluded = set(exclude)
    best: Optional[tuple[float, int]] = None
    for disc in scene.discs:
        if disc.id in excluded:
            continue
        t = _disc_hit_time(disc, math.dist(x, disc.center), scene.horizon)
        if t is not None and (best is None or (t, disc.id) < best):
            best = (t, disc.id)
    if best is None:
        return FirstHit(disc_id=None, hit_time=math.inf)
    return FirstHit(disc_id=best[1], hit_time=best[0])


def point_dominated(scene: Scene, x: tuple[float, float], t: float,
                    own_disc: Optional[int]) -> bool:
    """True when x lies strictly inside some disc other than its own at time t.

    Penetration must exceed 1e-9: exact boundary contact (a tangent grazing a
    static disc, say) does not dominate.
    """
    for disc in scene.discs:
        if disc.id == own_disc:
            continue
        if disc.radius(t) - math.dist(x, disc.center) > PENETRATION_TOL:
            return True
    return False


def is_dominated(scene: Scene, edge: TangentEdge, tau: float) -> bool:
    """Lemma-8 style endpoint test for the leg of (edge, tau).

    The departure point is tested against every disc except the edge's source
    at the departure time, the arrival point against every disc except the
    edge's target at the arrival time.
    """
    geo = tangent_geometry(edge.di, edge.dj, edge.kind, tau, scene.v_max)
    if geo is None:
        return False
    p, q, _, arrival = geo
    if point_dominated(scene, p, tau, edge.from_disc):
        return True
    return point_dominated(scene, q, arrival, edge.to_disc)
