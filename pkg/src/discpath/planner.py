"""Adjacency graph over Steiner points and the time-dependent Dijkstra query.

Vertices are the two moving endpoints of every tangent edge plus the query
source and destination; spiral successors between Steiner points on the same
disc are generated lazily at each vertex's settle time, because the angular
order of Steiner points changes as the discs grow.  Distances are lengths
(time * v_max); an edge relaxed from a vertex settled at distance D departs at
time D / v_max.
"""

from __future__ import annotations

import logging
import math
import heapq
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kinematics as kin
from .arrangement import IntersectionSequence, build_intersection_set
from .blockedset import (
    BlockedSequence,
    blocked_set,
    is_blocked,
    leg_blocked_direct,
    leg_min_clearance,
)
from .domination import is_dominated, point_dominated, first_hit
from .kinematics import (
    DEST_ID,
    KIND_ORDER,
    SOURCE_ID,
    Leg,
    RobotPath,
    SpiralTarget,
    TangentEdge,
    TangentKind,
    departure_theta_array,
    in_domain,
    race_spiral,
    tangent_geometry,
    tangent_leg,
)
from .scene import Disc, Scene, VelocityPoly

__all__ = [
    "Graph",
    "AugmentedGraph",
    "Preprocessed",
    "QueryResult",
    "EndpointInsideObstacle",
    "build_graph",
    "preprocess",
    "augment_query",
    "edge_weight",
    "query",
]

log = logging.getLogger("discpath")

SPIRAL_CLEARANCE_SAMPLES = 128
GRAZING_BAND = 1e-6  # outputs with min clearance in [-band, 0) are flagged, not rejected


class EndpointInsideObstacle(ValueError):
    def __init__(self, which: str, point: tuple[float, float], disc_id: int):
        super().__init__(f"{which} point {point} is inside disc {disc_id} at t=0")
        self.which = which
        self.point = point
        self.disc_id = disc_id


@dataclass(frozen=True)
class Graph:
    """Tangent edges between scene discs: 4 per ordered pair, domain-restricted."""

    scene: Scene
    edges: tuple[TangentEdge, ...]

    def edges_from(self, disc_id: int) -> list[TangentEdge]:
        return [e for e in self.edges if e.from_disc == disc_id]


def build_graph(scene: Scene) -> Graph:
    edges: list[TangentEdge] = []
    eid = 0
    for di in scene.discs:
        for dj in scene.discs:
            if di.id == dj.id:
                continue
            dom_inner = kin.compute_pair_domain(di, dj, True, scene.v_max, scene.horizon)
            dom_outer = kin.compute_pair_domain(di, dj, False, scene.v_max, scene.horizon)
            for kind in KIND_ORDER:
                edges.append(
                    TangentEdge(eid, di, dj, kind, dom_inner if kind.inner else dom_outer)
                )
                eid += 1
    return Graph(scene=scene, edges=tuple(edges))


@dataclass(frozen=True)
class Preprocessed:
    """Everything the query needs: graph, intersection sequences, blocked set."""

    graph: Graph
    sequences: dict[int, IntersectionSequence]
    blocked: dict[int, BlockedSequence]
    k: int


def preprocess(scene: Scene) -> Preprocessed:
    graph = build_graph(scene)
    sequences, k = build_intersection_set(scene, graph.edges)
    blocked = blocked_set(scene, graph.edges, sequences)
    return Preprocessed(graph=graph, sequences=sequences, blocked=blocked, k=k)


@dataclass(frozen=True)
class AugmentedGraph:
    """Scene graph plus the query endpoints as zero-radius, zero-velocity discs."""

    scene: Scene
    edges: tuple[TangentEdge, ...]          # scene edges + query edges
    query_edge_ids: frozenset[int]
    source: Disc
    dest: Disc

    def edges_from(self, disc_id: int) -> list[TangentEdge]:
        return [e for e in self.edges if e.from_disc == disc_id]


def augment_query(graph: Graph, s: tuple[float, float], d: tuple[float, float]) -> AugmentedGraph:
    """Attach s and d: point tangents to every disc, plus the direct s->d edge.

    Point-to-disc tangents come in two (the inner and outer families coincide
    for a zero-radius disc); their validity is always checked by direct
    geometry rather than the blocked set.
    """
    scene = graph.scene
    hit_s = first_hit(scene, s)
    if hit_s.hit_time <= 0.0:
        raise EndpointInsideObstacle("source", s, hit_s.disc_id)
    hit_d = first_hit(scene, d)
    if hit_d.hit_time <= 0.0:
        raise EndpointInsideObstacle("destination", d, hit_d.disc_id)

    zero = VelocityPoly((0.0,))
    src = Disc(SOURCE_ID, s, 0.0, zero)
    dst = Disc(DEST_ID, d, 0.0, zero)

    edges = list(graph.edges)
    eid = max((e.id for e in edges), default=-1) + 1
    qids = []
    point_kinds = (TangentKind.INNER_LEFT, TangentKind.INNER_RIGHT)
    for disc in scene.discs:
        for kind in point_kinds:
            dom = kin.compute_pair_domain(src, disc, True, scene.v_max, scene.horizon)
            edges.append(TangentEdge(eid, src, disc, kind, dom))
            qids.append(eid)
            eid += 1
        for kind in point_kinds:
            dom = kin.compute_pair_domain(disc, dst, True, scene.v_max, scene.horizon)
            edges.append(TangentEdge(eid, disc, dst, kind, dom))
            qids.append(eid)
            eid += 1
    if math.dist(s, d) > 0:
        edges.append(TangentEdge(eid, src, dst, TangentKind.INNER_LEFT,
                                 ((0.0, scene.horizon),)))
        qids.append(eid)
        eid += 1
    return AugmentedGraph(
        scene=scene,
        edges=tuple(edges),
        query_edge_ids=frozenset(qids),
        source=src,
        dest=dst,
    )


# ---------------------------------------------------------------------------
# weight function
# ---------------------------------------------------------------------------

def edge_weight(
    pre: Preprocessed,
    aug: Optional[AugmentedGraph],
    edge: TangentEdge,
    tau: float,
    counters: Optional[dict] = None,
) -> float:
    """Length of the leg for (edge, tau), or inf when the leg is invalid.

    Invalid means: outside the edge's domain, arriving past the horizon,
    blocked (via the precomputed intervals for scene edges, direct geometry
    for query edges), or dominated at an endpoint.
    """
    scene = pre.graph.scene

    def bump(reason: str) -> float:
        if counters is not None:
            counters[reason] = counters.get(reason, 0) + 1
        return math.inf

    if tau < -1e-12 or tau > scene.horizon:
        return bump("horizon")
    if not in_domain(edge, tau):
        return bump("domain")
    sol = kin.tangent_length(edge.di, edge.dj, edge.kind.inner, tau, scene.v_max)
    if sol is None:
        return bump("domain")
    ell, arrival = sol
    if arrival > scene.horizon * (1 + 1e-12) + 1e-12:
        return bump("horizon")

    is_query = aug is not None and edge.id in aug.query_edge_ids
    if is_query:
        leg = tangent_leg(edge, tau, scene.v_max)
        exclude = tuple(x for x in (edge.from_disc, edge.to_disc) if x >= 0)
        if leg_blocked_direct(scene, leg, exclude=exclude):
            return bump("blocked")
    else:
        bseq = pre.blocked.get(edge.id)
        if bseq is not None and is_blocked(bseq, tau):
            return bump("blocked")
    # query endpoints have zero radius and velocity, so they dominate nothing
    # and the plain scene is the right domination environment for all edges
    if is_dominated(scene, edge, tau):
        return bump("dominated")
    if counters is not None:
        counters["valid"] = counters.get("valid", 0) + 1
    return ell


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------

@dataclass
class QueryResult:
    status: str                      # "found" | "unreachable" | "horizon-exceeded"
    path: Optional[RobotPath]
    arrival_time: float              # inf unless found
    diagnostics: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        legs = []
        if self.path is not None:
            for leg in self.path.legs:
                legs.append(
                    {
                        "kind": leg.kind,
                        "t_start": leg.t_start,
                        "t_end": leg.t_end,
                        "from": [leg.start[0], leg.start[1]],
                        "to": [leg.end[0], leg.end[1]],
                        "disc_id": leg.disc_id,
                        "direction": leg.direction,
                    }
                )
        return {
            "status": self.status,
            "arrival_time": self.arrival_time if math.isfinite(self.arrival_time) else None,
            "legs": legs,
        }


@dataclass(frozen=True)
class _VKey:
    """Sortable vertex key: ('src',) / ('dst',) / (role, edge_id)."""

    role: str
    edge_id: int = -1

    def sort_key(self):
        return (self.role, self.edge_id)


@dataclass
class _Settled:
    dist: float
    time: float
    position: tuple[float, float]
    disc_id: Optional[int]        # disc the vertex sits on (None for src/dst)
    parent: Optional[_VKey]
    leg: Optional[Leg]


def _spiral_targets(aug: AugmentedGraph, scene: Scene, disc_id: int,
                    exclude_edge: Optional[int]) -> list[SpiralTarget]:
    out = []
    for e in aug.edges_from(disc_id):
        if e.id == exclude_edge or not e.domain:
            continue
        out.append(SpiralTarget(
            key=e.id,
            theta_fn=(lambda ts, e=e: departure_theta_array(e.di, e.dj, e.kind, ts, scene.v_max)),
            domain=e.domain,
            theta_scalar_fn=(lambda t, e=e: kin.departure_theta(e.di, e.dj, e.kind, t, scene.v_max)),
        ))
    return out


def query(pre: Preprocessed, s: tuple[float, float], d: tuple[float, float]) -> QueryResult:
    """Time-minimal path from s to d via Dijkstra with time-dependent weights."""
    scene = pre.graph.scene
    v_max = scene.v_max
    aug = augment_query(pre.graph, s, d)

    src_key = _VKey("src")
    dst_key = _VKey("dst")
    counters: dict = {"relaxations": 0, "spiral_races": 0}

    settled: dict[_VKey, _Settled] = {}
    heap: list[tuple[float, tuple, int, object]] = []
    serial = 0

    def push(dist: float, key: _VKey, parent: Optional[_VKey], leg: Optional[Leg],
             position: tuple[float, float], disc_id: Optional[int]) -> None:
        nonlocal serial
        heapq.heappush(heap, (dist, key.sort_key(), serial, (key, parent, leg, position, disc_id)))
        serial += 1

    push(0.0, src_key, None, None, s, None)

    edge_by_id = {e.id: e for e in aug.edges}

    def relax_tangent(edge: TangentEdge, u_key: _VKey, u: _Settled) -> None:
        counters["relaxations"] += 1
        tau = u.dist / v_max
        w = edge_weight(pre, aug, edge, tau, counters)
        if not math.isfinite(w):
            return
        leg = tangent_leg(edge, tau, v_max)
        if edge.to_disc == DEST_ID:
            vkey = dst_key
            disc_id = None
        else:
            vkey = _VKey("arr", edge.id)
            disc_id = edge.to_disc
        push(u.dist + w, vkey, u_key, leg, leg.end, disc_id)

    def relax_spirals(u_key: _VKey, u: _Settled) -> None:
        if u.disc_id is None or u.disc_id < 0:
            return
        disc = scene.disc(u.disc_id)
        r = disc.radius(u.time)
        if r <= 0:
            return
        angle = math.atan2(u.position[1] - disc.center[1], u.position[0] - disc.center[0])
        exclude = u_key.edge_id if u_key.role == "dep" else None
        targets = _spiral_targets(aug, scene, u.disc_id, exclude)
        if not targets:
            return
        for direction, name in ((1, "ccw"), (-1, "cw")):
            counters["spiral_races"] += 1
            hit = race_spiral(disc, v_max, scene.horizon, u.time, angle, direction, targets)
            if hit is None:
                continue
            target_edge = edge_by_id[hit.target_key]
            leg = Leg(
                kind="spiral",
                t_start=u.time,
                t_end=hit.t_meet,
                start=u.position,
                end=hit.samples[-1][1:],
                disc_id=u.disc_id,
                direction=name,
                samples=hit.samples,
            )
            if leg.duration > 0:
                clearance = leg_min_clearance(scene, leg, exclude=(u.disc_id,),
                                              samples=SPIRAL_CLEARANCE_SAMPLES)
                if clearance < -GRAZING_BAND:
                    counters["spiral_blocked"] = counters.get("spiral_blocked", 0) + 1
                    continue
            if point_dominated(scene, leg.end, leg.t_end, u.disc_id):
                counters["spiral_dominated"] = counters.get("spiral_dominated", 0) + 1
                continue
            push(u.dist + v_max * leg.duration, _VKey("dep", target_edge.id),
                 u_key, leg, leg.end, u.disc_id)

    while heap:
        dist, _, _, (key, parent, leg, position, disc_id) = heapq.heappop(heap)
        if key in settled:
            continue
        t = dist / v_max
        settled[key] = _Settled(dist=dist, time=t, position=position,
                                disc_id=disc_id, parent=parent, leg=leg)
        if key == dst_key:
            break
        u = settled[key]
        if key == src_key:
            for edge in aug.edges_from(SOURCE_ID):
                relax_tangent(edge, key, u)
        elif key.role == "dep":
            relax_tangent(edge_by_id[key.edge_id], key, u)
            relax_spirals(key, u)
        else:  # arrival vertex on a disc
            relax_spirals(key, u)

    counters["settled"] = len(settled)
    if dst_key not in settled:
        status = "horizon-exceeded" if counters.get("horizon", 0) > 0 else "unreachable"
        return QueryResult(status=status, path=None, arrival_time=math.inf,
                           diagnostics=counters)

    legs: list[Leg] = []
    node: Optional[_VKey] = dst_key
    while node is not None:
        rec = settled[node]
        if rec.leg is not None:
            legs.append(rec.leg)
        node = rec.parent
    legs.reverse()
    legs = [l for l in legs if l.duration > 1e-15 or len(legs) == 1]
    arrival = settled[dst_key].time
    path = RobotPath(legs=tuple(legs), arrival_time=arrival)

    min_clear = math.inf
    for leg in legs:
        exclude = _leg_own_discs(leg, aug)
        c = leg_min_clearance(scene, leg, exclude=exclude, samples=256)
        min_clear = min(min_clear, c)
    if -GRAZING_BAND <= min_clear < 0:
        counters["grazing"] = True
    counters["min_third_disc_clearance"] = min_clear

    return QueryResult(status="found", path=path, arrival_time=arrival,
                       diagnostics=counters)


def _leg_own_discs(leg: Leg, aug: AugmentedGraph) -> tuple[int, ...]:
    """Discs whose boundary anchors the leg (excluded from its clearance report)."""
    if leg.kind == "spiral":
        return (leg.disc_id,) if leg.disc_id is not None else ()
    own = []
    for disc in aug.scene.discs:
        for pt, t in ((leg.start, leg.t_start), (leg.end, leg.t_end)):
            if abs(math.dist(pt, disc.center) - disc.radius(t)) < 1e-6 * max(1.0, disc.radius(t)):
                own.append(disc.id)
    return tuple(set(own))
