"""World model: discs with polynomially growing radii, plus scene I/O and validation.

A disc's radius at time t is ``r(t) = v(t) * t + radius0`` where ``v`` is a
polynomial velocity profile.  Everything downstream consumes an immutable,
validated :class:`Scene`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "VelocityPoly",
    "Disc",
    "Scene",
    "SceneError",
    "SceneParseError",
    "SceneValidationError",
    "validate_scene",
    "load_scene",
    "save_scene",
    "scene_hash",
]

FloatLike = Union[float, np.ndarray]

_GRID_SAMPLES = 10_000  # dense fallback for polynomial range checks


class SceneError(Exception):
    pass


class SceneParseError(SceneError):
    """The scene document is malformed or violates the schema."""


class SceneValidationError(SceneError):
    """The scene parsed but violates a model invariant."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class VelocityPoly:
    """Radius growth velocity v(t) = sum(coeffs[m] * t**m)."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("velocity polynomial needs at least one coefficient")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def effective_degree(self) -> int:
        """Degree ignoring trailing zero coefficients."""
        d = len(self.coeffs) - 1
        while d > 0 and self.coeffs[d] == 0.0:
            d -= 1
        return d

    def __call__(self, t: FloatLike) -> FloatLike:
        return _polyval(self.coeffs, t)

    def derivative_coeffs(self) -> tuple[float, ...]:
        if len(self.coeffs) == 1:
            return (0.0,)
        return tuple((m + 1) * c for m, c in enumerate(self.coeffs[1:]))

    def extrema_on(self, lo: float, hi: float) -> tuple[float, float]:
        """(min, max) of v over [lo, hi], via critical points plus a dense grid."""
        return _poly_range(self.coeffs, lo, hi)


@dataclass(frozen=True)
class Disc:
    """A growing disc: center is fixed, radius r(t) = v(t) * t + radius0."""

    id: int
    center: tuple[float, float]
    radius0: float
    velocity: VelocityPoly

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius0", float(self.radius0))
        rate = tuple((m + 1) * c for m, c in enumerate(self.velocity.coeffs))
        object.__setattr__(self, "_rate_coeffs", rate)

    def radius(self, t: FloatLike) -> FloatLike:
        return self.velocity(t) * t + self.radius0

    def radius_rate(self, t: FloatLike) -> FloatLike:
        # d/dt [v(t) t + R] = sum((m+1) c_m t^m)
        return _polyval(self._rate_coeffs, t)

    def _radius_rate_coeffs(self) -> tuple[float, ...]:
        return self._rate_coeffs

    def is_static(self) -> bool:
        return all(c == 0.0 for c in self.velocity.coeffs)


@dataclass(frozen=True)
class Scene:
    """Immutable validated world: discs, robot max speed, and a finite horizon.

    The horizon bounds every sweep and blocked-set computation; queries whose
    optimal arrival would exceed it fail explicitly rather than silently.
    """

    discs: tuple[Disc, ...]
    v_max: float
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "discs", tuple(self.discs))
        object.__setattr__(self, "v_max", float(self.v_max))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n(self) -> int:
        return len(self.discs)

    def disc(self, disc_id: int) -> Disc:
        for d in self.discs:
            if d.id == disc_id:
                return d
        raise KeyError(f"no disc with id {disc_id}")

    def diameter(self) -> float:
        """Extent of the scene at t=0 (bounding-box diagonal), at least 1."""
        if not self.discs:
            return 1.0
        xs = [d.center[0] for d in self.discs]
        ys = [d.center[1] for d in self.discs]
        rs = [d.radius0 for d in self.discs]
        w = (max(x + r for x, r in zip(xs, rs)) - min(x - r for x, r in zip(xs, rs)))
        h = (max(y + r for y, r in zip(ys, rs)) - min(y - r for y, r in zip(ys, rs)))
        return max(math.hypot(w, h), 1.0)


def _polyval(coeffs: tuple[float, ...], t: FloatLike) -> FloatLike:
    """Horner evaluation, lowest coefficient first; works on scalars and arrays."""
    if type(t) is float or type(t) is int:
        acc = coeffs[-1]
        for c in reversed(coeffs[:-1]):
            acc = acc * t + c
        return acc
    acc = coeffs[-1] if np.isscalar(t) else np.full_like(np.asarray(t, dtype=float), coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc = acc * t + c
    return acc


def _poly_range(coeffs: tuple[float, ...], lo: float, hi: float) -> tuple[float, float]:
    """Exact-ish (min, max) on [lo, hi]: endpoints + real critical points, plus grid."""
    candidates = [lo, hi]
    deriv = [(m + 1) * c for m, c in enumerate(coeffs[1:])]
    if any(c != 0.0 for c in deriv):
        roots = np.roots(list(reversed(deriv)))
        for r in roots:
            if abs(r.imag) < 1e-9 and lo - 1e-12 <= r.real <= hi + 1e-12:
                candidates.append(min(max(r.real, lo), hi))
    vals = [_polyval(coeffs, t) for t in candidates]
    grid = np.linspace(lo, hi, _GRID_SAMPLES)
    gv = _polyval(coeffs, grid)
    return (min(min(vals), float(gv.min())), max(max(vals), float(gv.max())))


def validate_scene(scene: Scene) -> list[str]:
    """Return all violated invariants (empty list means the scene is valid)."""
    out: list[str] = []
    if not scene.v_max > 0:
        out.append(f"v_max must be positive, got {scene.v_max}")
    if not scene.horizon > 0:
        out.append(f"horizon must be positive, got {scene.horizon}")
    if out:
        return out

    seen: set[int] = set()
    for d in scene.discs:
        if d.id in seen:
            out.append(f"disc {d.id}: duplicate id")
        seen.add(d.id)
        if d.radius0 < 0:
            out.append(f"disc {d.id}: negative initial radius {d.radius0}")
        vmin, vmax = d.velocity.extrema_on(0.0, scene.horizon)
        if vmin < -1e-12:
            out.append(f"disc {d.id}: velocity becomes negative on [0, horizon] (min {vmin:.6g})")
        if vmax >= scene.v_max:
            out.append(f"disc {d.id}: velocity exceeds v_max (max {vmax:.6g} >= {scene.v_max})")
        rmin, _ = _poly_range(d._radius_rate_coeffs(), 0.0, scene.horizon)
        if rmin < -1e-9:
            out.append(f"disc {d.id}: radius not nondecreasing on [0, horizon] (min rate {rmin:.6g})")

    # open interiors must be disjoint at t=0; boundary contact is allowed
    for a_idx in range(len(scene.discs)):
        for b_idx in range(a_idx + 1, len(scene.discs)):
            a, b = scene.discs[a_idx], scene.discs[b_idx]
            gap = math.dist(a.center, b.center) - (a.radius0 + b.radius0)
            if gap < -1e-9:
                out.append(f"disc {a.id}: initial overlap with disc {b.id} (gap {gap:.6g})")
    return out


_SCENE_KEYS = {"v_max", "horizon", "discs"}
_DISC_KEYS = {"id", "center", "radius0", "velocity_coeffs"}


def load_scene(text: str) -> Scene:
    """Parse a UTF-8 JSON scene document and validate it.

    Raises :class:`SceneParseError` for malformed documents and
    :class:`SceneValidationError` (carrying all violations) otherwise.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(f"not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SceneParseError("scene document must be a JSON object")
    unknown = set(doc) - _SCENE_KEYS
    if unknown:
        raise SceneParseError(f"unknown scene fields: {sorted(unknown)}")
    missing = _SCENE_KEYS - set(doc)
    if missing:
        raise SceneParseError(f"missing scene fields: {sorted(missing)}")

    discs = []
    if not isinstance(doc["discs"], list):
        raise SceneParseError("'discs' must be a list")
    for k, entry in enumerate(doc["discs"]):
        if not isinstance(entry, dict):
            raise SceneParseError(f"disc #{k}: must be an object")
        unknown = set(entry) - _DISC_KEYS
        if unknown:
            raise SceneParseError(f"disc #{k}: unknown fields {sorted(unknown)}")
        missing = _DISC_KEYS - set(entry)
        if missing:
            raise SceneParseError(f"disc #{k}: missing fields {sorted(missing)}")
        try:
            center = entry["center"]
            if not (isinstance(center, list) and len(center) == 2):
                raise SceneParseError(f"disc #{k}: center must be [x, y]")
            coeffs = entry["velocity_coeffs"]
            if not (isinstance(coeffs, list) and coeffs):
                raise SceneParseError(f"disc #{k}: velocity_coeffs must be a non-empty list")
            discs.append(
                Disc(
                    id=int(entry["id"]),
                    center=(float(center[0]), float(center[1])),
                    radius0=float(entry["radius0"]),
                    velocity=VelocityPoly(tuple(float(c) for c in coeffs)),
                )
            )
        except (TypeError, ValueError) as e:
            raise SceneParseError(f"disc #{k}: {e}") from e

    try:
        scene = Scene(discs=tuple(discs), v_max=float(doc["v_max"]), horizon=float(doc["horizon"]))
    except (TypeError, ValueError) as e:
        raise SceneParseError(str(e)) from e

    violations = validate_scene(scene)
    if violations:
        raise SceneValidationError(violations)
    return scene


def save_scene(scene: Scene) -> str:
    doc = {
        "v_max": scene.v_max,
        "horizon": scene.horizon,
        "discs": [
            {
                "id": d.id,
                "center": [d.center[0], d.center[1]],
                "radius0": d.radius0,
                "velocity_coeffs": list(d.velocity.coeffs),
            }
            for d in scene.discs
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def scene_hash(scene: Scene) -> str:
    """Stable content hash used to guard preprocessing indexes against stale scenes."""
    canonical = json.dumps(
        {
            "v_max": repr(scene.v_max),
            "horizon": repr(scene.horizon),
            "discs": [
                [d.id, repr(d.center[0]), repr(d.center[1]), repr(d.radius0),
                 [repr(c) for c in d.velocity.coeffs]]
                for d in sorted(scene.discs, key=lambda d: d.id)
            ],
        },
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode()).hexdigest()
