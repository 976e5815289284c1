"""Discrete curves, networks, boundaries, and their induced measures.

A curve is a polyline with an integer multiplicity and per-endpoint
constraints.  A network is a set of curves glued along junctions and
pinned to (possibly moving) boundary points; it induces a Radon measure
(length times multiplicity) that all verification machinery consumes.
Ambient space is Euclidean R^d throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

COINCIDENCE_TOL = 1e-12
DEGENERATE_EDGE = 1e-14


class DegenerateEdgeError(ValueError):
    """An edge shorter than the degeneracy threshold; resampling is needed."""


# ---------------------------------------------------------------------------
# endpoint constraints


@dataclass(frozen=True)
class EndpointConstraint:
    """How a curve end is attached: 'free', or pinned to a named entity.

    kind is one of 'free', 'fixed' (static boundary point), 'junction',
    'moving' (boundary trajectory); ref is the id of the referenced entity.
    """

    kind: str
    ref: str | None = None

    def __post_init__(self):
        if self.kind not in ("free", "fixed", "junction", "moving"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind != "free" and self.ref is None:
            raise ValueError(f"{self.kind} constraint needs a reference id")


FREE = EndpointConstraint("free")


def fixed(ref: str) -> EndpointConstraint:
    return EndpointConstraint("fixed", ref)


def junction(ref: str) -> EndpointConstraint:
    return EndpointConstraint("junction", ref)


def moving(ref: str) -> EndpointConstraint:
    return EndpointConstraint("moving", ref)


# ---------------------------------------------------------------------------
# boundary trajectories


class BoundaryTrajectory:
    """A prescribed boundary-point path, piecewise-cubic in time.

    Built from samples (t_i, x_i); position and velocity come from the C^2
    interpolant, so the velocity used in moving-boundary terms is C^1.
    """

    def __init__(self, times: Sequence[float], points: Sequence[Sequence[float]]):
        t = np.asarray(times, dtype=float)
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if t.ndim != 1 or len(t) != len(p):
            raise ValueError("times and points must have matching lengths")
        if len(t) < 2:
            raise ValueError("need at least two samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValueError("trajectory points must be finite")
        self.sample_times = t
        self.sample_points = p
        self._spline = CubicSpline(t, p, axis=0)
        self._velocity = self._spline.derivative()

    def position(self, t: float) -> np.ndarray:
        return np.asarray(self._spline(t), dtype=float)

    def velocity(self, t: float) -> np.ndarray:
        return np.asarray(self._velocity(t), dtype=float)


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class DiscreteCurve:
    """Polyline with multiplicity; the basic one-dimensional object.

    vertices is an (n, d) array, n >= 2, consecutive vertices distinct.
    A curve whose two ends are free and coincide is treated as closed.
    """

    vertices: np.ndarray
    multiplicity: int = 1
    start_constraint: EndpointConstraint = FREE
    end_constraint: EndpointConstraint = FREE

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        object.__setattr__(self, "vertices", v)
        if v.ndim != 2 or len(v) < 2:
            raise ValueError("curve needs an (n>=2, d) vertex array")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve vertices must be finite")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be a positive integer")
        if np.any(edge_lengths(v) == 0.0):
            raise ValueError("consecutive vertices must be distinct")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def is_closed(self) -> bool:
        return (
            self.start_constraint.kind == "free"
            and self.end_constraint.kind == "free"
            and np.linalg.norm(self.vertices[0] - self.vertices[-1]) <= COINCIDENCE_TOL
        )

    def length(self) -> float:
        return float(math.fsum(edge_lengths(self.vertices)))

    def mass(self) -> float:
        return self.multiplicity * self.length()


def edge_lengths(vertices: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(np.asarray(vertices, dtype=float), axis=0), axis=1)


def curvature_vectors(curve: DiscreteCurve) -> list[tuple[int, np.ndarray]]:
    """Discrete curvature vector at each interior vertex.

    H_i = 2 (e+/|e+| - e-/|e-|) / (|e+| + |e-|), the negative gradient of
    polyline length divided by the vertex mass (|e-|+|e+|)/2.  Closed curves
    also get a value at the seam vertex (index 0).  Endpoints of open curves
    get none.
    """
    v = curve.vertices
    if len(v) < 3:
        raise ValueError("need at least 3 vertices for interior curvature")
    lens = edge_lengths(v)
    if np.any(lens < DEGENERATE_EDGE):
        raise DegenerateEdgeError("edge below 1e-14; resample the curve first")
    edges = np.diff(v, axis=0)
    units = edges / lens[:, None]
    out: list[tuple[int, np.ndarray]] = []
    if curve.is_closed:
        # seam vertex uses the last edge as its incoming edge
        h0 = 2.0 * (units[0] - units[-1]) / (lens[0] + lens[-1])
        out.append((0, h0))
    h = 2.0 * (units[1:] - units[:-1]) / (lens[1:] + lens[:-1])[:, None]
    out.extend((i + 1, h[i]) for i in range(len(h)))
    return out


def curvature_array(curve: DiscreteCurve) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form of curvature_vectors: (indices, H rows)."""
    pairs = curvature_vectors(curve)
    idx = np.array([i for i, _ in pairs], dtype=int)
    vecs = np.array([hv for _, hv in pairs], dtype=float)
    return idx, vecs


def _arclength_positions(vertices: np.ndarray) -> np.ndarray:
    lens = edge_lengths(vertices)
    return np.concatenate([[0.0], np.cumsum(lens)])


def _point_at_arclength(vertices: np.ndarray, s_targets: np.ndarray) -> np.ndarray:
    s = _arclength_positions(vertices)
    out = np.empty((len(s_targets), vertices.shape[1]))
    idx = np.clip(np.searchsorted(s, s_targets, side="right") - 1, 0, len(s) - 2)
    seg = s[idx + 1] - s[idx]
    frac = np.where(seg > 0, (s_targets - s[idx]) / np.where(seg > 0, seg, 1.0), 0.0)
    out[:] = vertices[idx] + frac[:, None] * (vertices[idx + 1] - vertices[idx])
    return out


def resample(curve: DiscreteCurve, target_h: float) -> DiscreteCurve:
    """Arc-length resampling of the polyline to edge lengths near target_h.

    New vertices lie on the original polyline at uniform arc spacing L/n,
    n = round(L / target_h), so spacing stays in [target_h/2, 2*target_h]
    and endpoints are unchanged.  Original vertices at multiples of the
    spacing (corners of an L at matching arclength, say) are preserved.
    Length is exact for straight runs; coarsening across bends shortens by
    the inscribed-chord deficit, at most (spacing^2/8) * total turning.
    """
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    total = curve.length()
    if total <= target_h:
        v2 = np.vstack([curve.vertices[0], curve.vertices[-1]])
        return DiscreteCurve(v2, curve.multiplicity, curve.start_constraint, curve.end_constraint)
    n = max(1, int(round(total / target_h)))
    if curve.is_closed:
        n = max(n, 3)
    s_new = np.linspace(0.0, total, n + 1)
    pts = _point_at_arclength(curve.vertices, s_new)
    pts[0] = curve.vertices[0]
    pts[-1] = curve.vertices[-1]
    return DiscreteCurve(pts, curve.multiplicity, curve.start_constraint, curve.end_constraint)


def redistribute(curve: DiscreteCurve, target_h: float) -> DiscreteCurve:
    """Tangential redistribution through a cubic-spline reconstruction.

    Used by the flow between steps: sampling a C^2 interpolant instead of
    the polyline itself keeps repeated redistribution from compounding the
    inscribed-chord mass loss.  Endpoints are preserved exactly.
    """
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    v = curve.vertices
    total = curve.length()
    if total <= target_h or len(v) < 4:
        return resample(curve, target_h)
    s = _arclength_positions(v)
    if curve.is_closed:
        spline = CubicSpline(s, v, axis=0, bc_type="periodic")
    else:
        spline = CubicSpline(s, v, axis=0)
    n = max(1, int(round(total / target_h)))
    if curve.is_closed:
        n = max(n, 3)
    s_new = np.linspace(0.0, total, n + 1)
    pts = np.asarray(spline(s_new), dtype=float)
    pts[0] = v[0]
    pts[-1] = v[-1]
    return DiscreteCurve(pts, curve.multiplicity, curve.start_constraint, curve.end_constraint)


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class Network:
    """Curves plus named junctions and (static or moving) boundary points.

    Every junction id must be shared by at least two curve ends, every
    boundary id by at least one, and pinned endpoint coordinates must
    coincide with the pin position to 1e-12.
    """

    curves: tuple[DiscreteCurve, ...]
    boundary_points: dict[str, np.ndarray | BoundaryTrajectory] = field(default_factory=dict)
    junctions: dict[str, np.ndarray] = field(default_factory=dict)
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))
        bps = {}
        for k, p in self.boundary_points.items():
            bps[k] = p if isinstance(p, BoundaryTrajectory) else np.asarray(p, dtype=float)
        object.__setattr__(self, "boundary_points", bps)
        object.__setattr__(
            self, "junctions", {k: np.asarray(p, dtype=float) for k, p in self.junctions.items()}
        )
        self._validate()

    def _validate(self):
        junction_uses: dict[str, int] = {k: 0 for k in self.junctions}
        boundary_uses: dict[str, int] = {k: 0 for k in self.boundary_points}
        for c in self.curves:
            for constraint, vtx in (
                (c.start_constraint, c.vertices[0]),
                (c.end_constraint, c.vertices[-1]),
            ):
                if constraint.kind == "junction":
                    if constraint.ref not in self.junctions:
                        raise ValueError(f"unknown junction id {constraint.ref!r}")
                    junction_uses[constraint.ref] += 1
                    target = self.junctions[constraint.ref]
                elif constraint.kind in ("fixed", "moving"):
                    if constraint.ref not in self.boundary_points:
                        raise ValueError(f"unknown boundary id {constraint.ref!r}")
                    boundary_uses[constraint.ref] += 1
                    target = self.boundary_position(constraint.ref)
                else:
                    continue
                if np.linalg.norm(vtx - target) > COINCIDENCE_TOL:
                    raise ValueError(
                        f"curve end {vtx} not coincident with pin {constraint.ref!r} at {target}"
                    )
        for k, n in junction_uses.items():
            if n < 2:
                raise ValueError(f"junction {k!r} referenced by {n} curve ends, needs >= 2")
        for k, n in boundary_uses.items():
            if n < 1:
                raise ValueError(f"boundary point {k!r} referenced by no curve end")

    @property
    def dim(self) -> int:
        return self.curves[0].dim if self.curves else 2

    def boundary_position(self, ref: str, t: float | None = None) -> np.ndarray:
        p = self.boundary_points[ref]
        if isinstance(p, BoundaryTrajectory):
            return p.position(self.time if t is None else t)
        return p

    def static_boundary_positions(self) -> dict[str, np.ndarray]:
        return {k: self.boundary_position(k) for k in self.boundary_points}


@dataclass(frozen=True)
class MeasureView:
    """Mass functional of a network: total mass and mass in metric balls."""

    total_mass: float
    mass_in_ball: Callable[[np.ndarray, float], float]


def _edge_ball_clip(p: np.ndarray, q: np.ndarray, center: np.ndarray, radius: float) -> float:
    """Length of the part of segment pq inside the closed ball."""
    d = q - p
    a = float(d @ d)
    if a == 0.0:
        return 0.0
    f = p - center
    b = 2.0 * float(f @ d)
    c = float(f @ f) - radius * radius
    disc = b * b - 4 * a * c
    if disc <= 0:
        return 0.0
    root = math.sqrt(disc)
    s0 = max(0.0, (-b - root) / (2 * a))
    s1 = min(1.0, (-b + root) / (2 * a))
    if s1 <= s0:
        return 0.0
    return (s1 - s0) * math.sqrt(a)


def measure_of(network: Network) -> MeasureView:
    """Radon measure view: mass = sum over curves of multiplicity x length."""
    total = float(math.fsum(c.mass() for c in network.curves))

    def mass_in_ball(center: np.ndarray, radius: float) -> float:
        center = np.asarray(center, dtype=float)
        parts = []
        for c in network.curves:
            v = c.vertices
            parts.extend(
                c.multiplicity * _edge_ball_clip(v[i], v[i + 1], center, radius)
                for i in range(len(v) - 1)
            )
        return float(math.fsum(parts))

    return MeasureView(total_mass=total, mass_in_ball=mass_in_ball)


# ---------------------------------------------------------------------------
# stock geometries (used by tests, configs, and experiment scripts)


def circle_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> DiscreteCurve:
    """Closed regular n-gon inscribed in the circle, seam vertex repeated."""
    th = np.linspace(0.0, 2.0 * np.pi, n + 1)
    pts = np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)
    pts[-1] = pts[0]
    return DiscreteCurve(pts)


def segment_curve(a, b, n: int = 1, **kw) -> DiscreteCurve:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ts = np.linspace(0.0, 1.0, n + 1)[:, None]
    return DiscreteCurve(a + ts * (b - a), **kw)


def segment_network(a, b, n: int = 1, multiplicity: int = 1) -> Network:
    """Segment pinned at both ends to static boundary points 'A' and 'B'."""
    c = segment_curve(
        a, b, n, multiplicity=multiplicity, start_constraint=fixed("A"), end_constraint=fixed("B")
    )
    return Network(
        curves=(c,),
        boundary_points={"A": np.asarray(a, float), "B": np.asarray(b, float)},
    )


def spoke_network(
    tips: Sequence[Sequence[float]],
    hub,
    n: int = 8,
    junction_id: str = "P",
) -> Network:
    """Curves from an interior junction to each listed static boundary tip."""
    hub = np.asarray(hub, dtype=float)
    curves = []
    bps = {}
    for i, tip in enumerate(tips):
        tip = np.asarray(tip, dtype=float)
        bid = chr(ord("A") + i)
        bps[bid] = tip
        curves.append(
            segment_curve(
                hub,
                tip,
                n,
                start_constraint=junction(junction_id),
                end_constraint=fixed(bid),
            )
        )
    return Network(curves=tuple(curves), boundary_points=bps, junctions={junction_id: hub})


# ---------------------------------------------------------------------------
# JSON interface


def _constraint_to_json(c: EndpointConstraint):
    if c.kind == "free":
        return "free"
    key = {"fixed": "fixed", "junction": "junction", "moving": "moving"}[c.kind]
    return {key: c.ref}


def _constraint_from_json(obj) -> EndpointConstraint:
    if obj == "free":
        return FREE
    if isinstance(obj, dict) and len(obj) == 1:
        (key, ref), = obj.items()
        if key in ("fixed", "junction", "moving"):
            return EndpointConstraint(key, str(ref))
    raise ValueError(f"bad constraint encoding {obj!r}")


def network_to_json(network: Network) -> dict:
    curves = [
        {
            "vertices": c.vertices.tolist(),
            "multiplicity": c.multiplicity,
            "start": _constraint_to_json(c.start_constraint),
            "end": _constraint_to_json(c.end_constraint),
        }
        for c in network.curves
    ]
    bps = []
    for k, p in network.boundary_points.items():
        if isinstance(p, BoundaryTrajectory):
            samples = [[float(t), *map(float, x)] for t, x in zip(p.sample_times, p.sample_points)]
            bps.append({"id": k, "trajectory": samples})
        else:
            bps.append({"id": k, "point": p.tolist()})
    junctions = [{"id": k, "point": p.tolist()} for k, p in network.junctions.items()]
    return {"curves": curves, "boundary_points": bps, "junctions": junctions}


def network_from_json(obj: dict) -> Network:
    curves = tuple(
        DiscreteCurve(
            np.asarray(c["vertices"], dtype=float),
            int(c.get("multiplicity", 1)),
            _constraint_from_json(c.get("start", "free")),
            _constraint_from_json(c.get("end", "free")),
        )
        for c in obj["curves"]
    )
    bps: dict[str, np.ndarray | BoundaryTrajectory] = {}
    for b in obj.get("boundary_points", []):
        if "trajectory" in b:
            rows = np.asarray(b["trajectory"], dtype=float)
            bps[str(b["id"])] = BoundaryTrajectory(rows[:, 0], rows[:, 1:])
        else:
            bps[str(b["id"])] = np.asarray(b["point"], dtype=float)
    junctions = {str(j["id"]): np.asarray(j["point"], dtype=float) for j in obj.get("junctions", [])}
    return Network(curves=curves, boundary_points=bps, junctions=junctions)


def save_network(network: Network, path) -> None:
    with open(path, "w") as f:
        json.dump(network_to_json(network), f)


def load_network(path) -> Network:
    with open(path) as f:
        return network_from_json(json.load(f))
