"""Discrete first variation of curve networks.

The mass of a network responds to an ambient vectorfield X through an
interior term (the mean curvature pairing) and a boundary term (the vector
nu, a finite sum of outward unit tangents at each endpoint).  This module
computes both sides, the mod-2 boundary operator, the standardness check,
and the sharp trig lower bound for |sum of k unit vectors in a cone|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    COINCIDENCE_TOL,
    DiscreteCurve,
    Network,
    curvature_array,
    edge_lengths,
)


@dataclass(frozen=True)
class DiscreteVarifold:
    """Weighted (point, tangent-line) samples; tangents are unit up to sign."""

    points: np.ndarray   # (n, d)
    tangents: np.ndarray  # (n, d), unit rows
    weights: np.ndarray   # (n,), positive

    def __post_init__(self):
        norms = np.linalg.norm(self.tangents, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("tangents must be unit vectors (tol 1e-12)")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def total_weight(self) -> float:
        return float(math.fsum(self.weights))


@dataclass(frozen=True)
class BoundaryVector:
    """The discrete nu at a named endpoint; |nu| <= 1 on valid flow states."""

    at: str
    nu: np.ndarray


@dataclass(frozen=True)
class Mod2Chain:
    """Points where the mod-2 boundary of the network is nonzero."""

    odd_points: tuple[np.ndarray, ...]

    def positions(self) -> np.ndarray:
        if not self.odd_points:
            return np.zeros((0, 2))
        return np.array(self.odd_points)


def to_varifold(network: Network) -> DiscreteVarifold:
    """One sample per edge midpoint; weight = edge length x multiplicity."""
    pts, tans, wts = [], [], []
    for c in network.curves:
        v = c.vertices
        e = np.diff(v, axis=0)
        lens = np.linalg.norm(e, axis=1)
        pts.append((v[:-1] + v[1:]) / 2.0)
        tans.append(e / lens[:, None])
        wts.append(c.multiplicity * lens)
    return DiscreteVarifold(
        points=np.concatenate(pts),
        tangents=np.concatenate(tans),
        weights=np.concatenate(wts),
    )


def _check_gradient(X, grad_X, sample_points: np.ndarray, rtol: float = 1e-4, seed: int = 0):
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(sample_points), size=min(3, len(sample_points)), replace=False)
    for p in sample_points[idx]:
        G = np.asarray(grad_X(p), dtype=float)
        d = len(p)
        scale = max(1.0, float(np.linalg.norm(p)))
        h = 1e-6 * scale
        fd = np.empty((d, d))
        for j in range(d):
            ej = np.zeros(d)
            ej[j] = h
            fd[:, j] = (np.asarray(X(p + ej), float) - np.asarray(X(p - ej), float)) / (2 * h)
        denom = max(1.0, float(np.abs(G).max()))
        if np.abs(G - fd).max() > rtol * denom:
            raise ValueError(
                "grad_X inconsistent with X by finite differences "
                f"(max deviation {np.abs(G - fd).max():.3e} at point {p})"
            )


def first_variation(network: Network, X, grad_X, *, seed: int = 0) -> float:
    """Discrete integral of Div_M X over the network.

    Per edge-midpoint sample: weight * (tangent . grad_X(mid) . tangent).
    grad_X(p)[i, j] = dX_i/dx_j; it is validated against X by central
    differences at 3 sample points before use.
    """
    v = to_varifold(network)
    _check_gradient(X, grad_X, v.points, seed=seed)
    parts = []
    for p, tau, w in zip(v.points, v.tangents, v.weights):
        G = np.asarray(grad_X(p), dtype=float)
        parts.append(w * float(tau @ G @ tau))
    return float(math.fsum(parts))


def _curve_end_data(network: Network):
    """Yield (constraint, end vertex, outward unit tangent, multiplicity)."""
    for c in network.curves:
        v = c.vertices
        for constraint, endpoint, inner in (
            (c.start_constraint, v[0], v[1]),
            (c.end_constraint, v[-1], v[-2]),
        ):
            out = endpoint - inner
            nrm = np.linalg.norm(out)
            yield constraint, endpoint, out / nrm, c.multiplicity


def boundary_vectors(network: Network) -> list[BoundaryVector]:
    """nu at each boundary point: sum of outward unit tangents x multiplicity.

    Outward means from the second vertex toward the endpoint.
    """
    acc: dict[str, np.ndarray] = {}
    for constraint, _, out, mult in _curve_end_data(network):
        if constraint.kind in ("fixed", "moving"):
            acc.setdefault(constraint.ref, np.zeros(network.dim))
            acc[constraint.ref] = acc[constraint.ref] + mult * out
    return [BoundaryVector(at=k, nu=acc[k]) for k in network.boundary_points if k in acc]


def junction_imbalance(network: Network) -> dict[str, np.ndarray]:
    """Sum of outward unit tangents at each junction (zero when balanced)."""
    acc: dict[str, np.ndarray] = {k: np.zeros(network.dim) for k in network.junctions}
    for constraint, _, out, mult in _curve_end_data(network):
        if constraint.kind == "junction":
            acc[constraint.ref] = acc[constraint.ref] + mult * out
    return acc


def nu_within_unit(bvs: list[BoundaryVector], tol: float = 1e-6) -> bool:
    """Flow-state validity diagnostic: every |nu| <= 1 + tol."""
    return all(np.linalg.norm(b.nu) <= 1.0 + tol for b in bvs)


def trig_bound(k: int, theta: float) -> float:
    """Sharp lower bound for |sum of k unit vectors with angles within theta|.

    k cos(theta) for even k, sqrt(1 + (k^2 - 1) cos^2 theta) for odd k.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    if not 0.0 <= theta < math.pi / 2:
        raise ValueError("theta must lie in [0, pi/2)")
    c = math.cos(theta)
    if k % 2 == 0:
        return k * c
    return math.sqrt(1.0 + (k * k - 1.0) * c * c)


def trig_min_bruteforce(k: int, theta: float, grid: int = 16) -> float:
    """Grid minimization oracle for the trig bound: min |sum (cos a_i, sin a_i)|
    over a_i in [-theta, theta] on a grid that includes the endpoints."""
    angles = np.linspace(-theta, theta, grid) if theta > 0 else np.zeros(1)
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    sums_x = np.zeros(1)
    sums_y = np.zeros(1)
    for _ in range(k):
        sums_x = (sums_x[:, None] + cos_a[None, :]).ravel()
        sums_y = (sums_y[:, None] + sin_a[None, :]).ravel()
    return float(np.min(np.hypot(sums_x, sums_y)))


def _group_by_position(items, tol: float):
    """Greedy grouping of (position, payload) pairs by coincidence."""
    groups: list[tuple[np.ndarray, list]] = []
    for pos, payload in items:
        for gpos, bucket in groups:
            if np.linalg.norm(pos - gpos) <= tol:
                bucket.append(payload)
                break
        else:
            groups.append((pos, [payload]))
    return groups


def mod2_boundary(network: Network, tol: float = COINCIDENCE_TOL) -> Mod2Chain:
    """Endpoints (boundary, junction, or free) with odd total incident
    multiplicity.  Coincident curve ends cancel; closed curves contribute
    nothing."""
    ends = [(endpoint, mult) for _, endpoint, _, mult in _curve_end_data(network)]
    odd = [
        gpos
        for gpos, mults in _group_by_position(ends, tol)
        if sum(mults) % 2 == 1
    ]
    return Mod2Chain(odd_points=tuple(odd))


@dataclass(frozen=True)
class StandardnessReport:
    is_standard: bool
    missing: tuple[np.ndarray, ...] = ()    # Gamma points absent from the mod-2 boundary
    extra: tuple[np.ndarray, ...] = ()      # mod-2 boundary points not in Gamma
    violators: tuple[str, ...] = field(default_factory=tuple)


def is_standard_state(
    network: Network, gamma_ids: set[str], tol: float = COINCIDENCE_TOL
) -> StandardnessReport:
    """True iff the mod-2 boundary equals exactly the listed Gamma points."""
    chain = mod2_boundary(network, tol)
    gamma_pos = [network.boundary_position(g) for g in sorted(gamma_ids)]
    odd = list(chain.odd_points)
    missing = []
    for g in gamma_pos:
        hit = next((i for i, p in enumerate(odd) if np.linalg.norm(p - g) <= tol), None)
        if hit is None:
            missing.append(g)
        else:
            odd.pop(hit)
    extra = odd
    violators = []
    for p in extra:
        name = None
        for k, q in network.junctions.items():
            if np.linalg.norm(p - q) <= tol:
                name = k
                break
        violators.append(name if name is not None else f"point{np.round(p, 9).tolist()}")
    return StandardnessReport(
        is_standard=not missing and not extra,
        missing=tuple(missing),
        extra=tuple(extra),
        violators=tuple(violators),
    )


def divergence_identity_residual(network: Network, X, grad_X, *, seed: int = 0) -> float:
    """|int Div_M X + sum H.X weights - sum nu.X| for the discrete model.

    The continuum identity is int Div_M X dM = -int H.X dM + sum nu.X over
    endpoints; the residual measures quadrature error, O(h) or better.
    Free and junction ends contribute their outward tangents like boundary
    points here, which is the identity's bookkeeping, not a flow statement.
    """
    fv = first_variation(network, X, grad_X, seed=seed)
    interior = []
    for c in network.curves:
        v = c.vertices
        lens = edge_lengths(v)
        idx, H = curvature_array(c)
        for i, hv in zip(idx, H):
            if c.is_closed and i == 0:
                w = c.multiplicity * (lens[0] + lens[-1]) / 2.0
            else:
                w = c.multiplicity * (lens[i - 1] + lens[i]) / 2.0
            interior.append(w * float(hv @ np.asarray(X(v[i]), float)))
    boundary = []
    for c in network.curves:
        if c.is_closed:
            continue
        v = c.vertices
        for endpoint, inner in ((v[0], v[1]), (v[-1], v[-2])):
            out = endpoint - inner
            out = out / np.linalg.norm(out)
            boundary.append(c.multiplicity * float(out @ np.asarray(X(endpoint), float)))
    return abs(fv + math.fsum(interior) - math.fsum(boundary))
