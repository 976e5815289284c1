"""Backward heat kernel machinery and localized monotonicity.

rho(x,t) = (4 pi |t|)^(-m/2) exp(-|x|^2 / (4|t|)) for t < 0, cut off by a
fixed C^2 radial bump phi.  The monotone quantity along a flow is

    exp(-m A^2 t) * ( (M rho_hat)(t) + int_{T0}^t sum nu . grad rho_hat
                      - C K t ),

where C bounds the mass in the unit ball, K bounds the cutoff-region
defect of the backward-heat identity, and the boundary sum ranges over
pinned endpoints (with an extra -rho_hat * (nu . Gamma_dot) term when the
boundary moves).  The Gaussian density is the t -> 0 limit of the mass
term, extrapolated from a geometric ladder of sample times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import geometry, varifold
from .flow import FlowTrajectory


@dataclass(frozen=True)
class KernelConfig:
    m: int = 1
    cutoff_inner: float = 0.5
    cutoff_outer: float = 1.0
    cutoff_enabled: bool = True

    def __post_init__(self):
        if not 0 < self.cutoff_inner < self.cutoff_outer:
            raise ValueError("need 0 < cutoff_inner < cutoff_outer")


def _bump(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The quintic C^2 monotone bump q(u) = (1-u)^3 (1+3u+6u^2) on [0,1]."""
    q = 1.0 - 10.0 * u**3 + 15.0 * u**4 - 6.0 * u**5
    dq = -30.0 * u**2 * (1.0 - u) ** 2
    ddq = -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return q, dq, ddq


def cutoff(s, cfg: KernelConfig):
    """phi(s), phi'(s), phi''(s): 1 on [0, inner], quintic decay, 0 beyond outer."""
    s = np.asarray(s, dtype=float)
    if not cfg.cutoff_enabled:
        one = np.ones_like(s)
        zero = np.zeros_like(s)
        return one, zero, zero
    width = cfg.cutoff_outer - cfg.cutoff_inner
    u = np.clip((s - cfg.cutoff_inner) / width, 0.0, 1.0)
    q, dq, ddq = _bump(u)
    inside = (s > cfg.cutoff_inner) & (s < cfg.cutoff_outer)
    phi = np.where(s <= cfg.cutoff_inner, 1.0, np.where(s >= cfg.cutoff_outer, 0.0, q))
    dphi = np.where(inside, dq / width, 0.0)
    ddphi = np.where(inside, ddq / width**2, 0.0)
    return phi, dphi, ddphi


def _rho_many(points: np.ndarray, t: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    s = -t
    r2 = np.einsum("ij,ij->i", points, points)
    val = (4.0 * np.pi * s) ** (-m / 2.0) * np.exp(-r2 / (4.0 * s))
    grad = val[:, None] * (-points / (2.0 * s))
    return val, grad


def rho_hat_many(points: np.ndarray, t: float, cfg: KernelConfig):
    """Vectorized (value, gradient) of the cut-off kernel at many points."""
    if t >= 0:
        raise ValueError("kernel is defined for t < 0")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rho, grad_rho = _rho_many(points, t, cfg.m)
    r = np.linalg.norm(points, axis=1)
    phi, dphi, _ = cutoff(r, cfg)
    val = phi * rho
    safe_r = np.where(r > 0, r, 1.0)
    radial = np.where(r > 0, dphi * rho / safe_r, 0.0)
    grad = radial[:, None] * points + phi[:, None] * grad_rho
    return val, grad


def rho_hat(x, t: float, cfg: KernelConfig = KernelConfig()):
    """Cut-off backward heat kernel and its spatial gradient at one point."""
    val, grad = rho_hat_many(np.asarray(x, dtype=float)[None, :], t, cfg)
    return float(val[0]), grad[0]


def backward_heat_residual(x, t: float, tangent) -> float:
    """d rho/dt + Div_P grad rho + |grad^perp rho|^2 / rho on the line with
    direction `tangent` (no cutoff).  Vanishes identically for m = 1."""
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tangent, dtype=float)
    tau = tau / np.linalg.norm(tau)
    s = -t
    r2 = float(x @ x)
    c = float(x @ tau)
    rho = (4.0 * np.pi * s) ** (-0.5) * math.exp(-r2 / (4.0 * s))
    d_dt = rho * (1.0 / (2.0 * s) - r2 / (4.0 * s**2))
    div_p = rho * (c * c / (4.0 * s**2) - 1.0 / (2.0 * s))
    perp = rho * (r2 - c * c) / (4.0 * s**2)
    return d_dt + div_p + perp


def k_integrand(r, mu, s, cfg: KernelConfig):
    """Closed-form cutoff defect of the backward-heat identity (m = 1).

    r = |x|, mu = (x . tau)/|x| in [0, 1], s = |t|.  Zero wherever phi = 1
    or phi = 0; the phi'^2/phi factor stays bounded because the bump has
    cubic contact at its outer end.
    """
    r = np.asarray(r, dtype=float)
    mu = np.asarray(mu, dtype=float)
    s = np.asarray(s, dtype=float)
    phi, dphi, ddphi = cutoff(r, cfg)
    rho = (4.0 * np.pi * s) ** (-0.5) * np.exp(-(r**2) / (4.0 * s))
    c2 = (mu * r) ** 2
    perp2 = r**2 - c2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(phi > 0, dphi**2 / np.where(phi > 0, phi, 1.0), 0.0)
    val = rho * (
        ddphi * c2 / r**2
        + dphi * (1.0 / r - c2 / r**3)
        - dphi * r / s
        + perp2 * ratio / r**2
    )
    return val


_K_CACHE: dict = {}


def compute_K(cfg: KernelConfig, t_range: tuple[float, float],
              grid: tuple[int, int, int] = (141, 80, 41)) -> float:
    """Numerical sup of the cutoff defect over the annulus, tangent
    directions, and |t| in range, times a 1.05 safety factor."""
    if cfg.m != 1:
        raise NotImplementedError("K estimation implemented for m = 1")
    if not cfg.cutoff_enabled:
        return 0.0
    s_lo, s_hi = sorted((abs(t_range[0]), abs(t_range[1])))
    s_lo = max(s_lo, 1e-12)
    key = (cfg, round(math.log10(s_lo), 6), round(math.log10(s_hi), 6), grid)
    if key in _K_CACHE:
        return _K_CACHE[key]
    nr, ns, nmu = grid
    r = np.linspace(cfg.cutoff_inner, cfg.cutoff_outer, nr)[1:-1]
    s = np.geomspace(s_lo, s_hi, ns)
    mu = np.linspace(0.0, 1.0, nmu)
    vals = k_integrand(r[:, None, None], mu[None, None, :], s[None, :, None], cfg)
    K = 1.05 * float(np.abs(vals).max())
    _K_CACHE[key] = K
    return K


# ---------------------------------------------------------------------------
# monotone quantity and Gaussian density


@dataclass(frozen=True)
class MonotoneSeries:
    """Sampled monotone quantity: times t < 0 increasing toward 0."""

    times: np.ndarray
    values: np.ndarray
    mass_terms: np.ndarray
    boundary_terms: np.ndarray
    ck_terms: np.ndarray
    C: float
    K: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "value", "mass_term", "boundary_term", "ck_term"])
            for row in zip(self.times, self.values, self.mass_terms,
                           self.boundary_terms, self.ck_terms):
                w.writerow([f"{x:.17g}" for x in row])


def _snapshot_mass_term(snapshot, center: np.ndarray, t_rel: float, cfg: KernelConfig) -> float:
    v = varifold.to_varifold(snapshot.network)
    vals, _ = rho_hat_many(v.points - center, t_rel, cfg)
    return float(vals @ v.weights)


def _snapshot_boundary_integrand(snapshot, center: np.ndarray, t_rel: float,
                                 cfg: KernelConfig) -> float:
    total = 0.0
    net = snapshot.network
    for bid, nu in snapshot.boundary_nu.items():
        pos = net.boundary_position(bid)
        val, grad = rho_hat(pos - center, t_rel, cfg)
        term = float(nu @ grad)
        traj = net.boundary_points[bid]
        if isinstance(traj, geometry.BoundaryTrajectory):
            gdot = traj.velocity(snapshot.time)
            term -= val * float(nu @ gdot)
        total += term
    return total


def monotone_series(traj: FlowTrajectory, center_point, center_time: float,
                    cfg: KernelConfig = KernelConfig(), *, A: float = 0.0,
                    t_window: tuple[float, float] | None = None) -> MonotoneSeries:
    """Evaluate the boundary-corrected monotone quantity along a trajectory.

    Spacetime is translated so the center is the origin; only snapshots
    strictly before the center time enter.
    """
    center = np.asarray(center_point, dtype=float)
    snaps = [s for s in traj.snapshots if s.time < center_time]
    if t_window is not None:
        lo, hi = t_window
        snaps = [s for s in snaps if lo <= s.time - center_time <= hi]
    if len(snaps) < 3:
        raise ValueError("need at least 3 snapshots before the center time")
    t_rel = np.array([s.time - center_time for s in snaps])
    mass = np.array([_snapshot_mass_term(s, center, tr, cfg)
                     for s, tr in zip(snaps, t_rel)])
    integrand = np.array([_snapshot_boundary_integrand(s, center, tr, cfg)
                          for s, tr in zip(snaps, t_rel)])
    boundary = np.concatenate([[0.0], np.cumsum(
        0.5 * (integrand[1:] + integrand[:-1]) * np.diff(t_rel))])
    C = max(geometry.measure_of(s.network).mass_in_ball(center, 1.0) for s in snaps)
    K = compute_K(cfg, (t_rel[0], t_rel[-1]))
    ck = -C * K * t_rel
    values = np.exp(-cfg.m * A * A * t_rel) * (mass + boundary + ck)
    return MonotoneSeries(times=t_rel, values=values, mass_terms=mass,
                          boundary_terms=boundary, ck_terms=ck, C=C, K=K)


def monotonicity_check(series: MonotoneSeries, tol: float):
    """Pass iff consecutive differences never increase by more than tol."""
    if len(series.times) < 3:
        raise ValueError("series too short")
    diffs = np.diff(series.values)
    max_uptick = float(max(0.0, diffs.max()))
    return max_uptick <= tol, max_uptick


def richardson_density(t_abs: np.ndarray, masses: np.ndarray) -> float:
    """Limit of the mass term as t -> 0 from three samples in geometric
    progression |t0| > |t0|/4 > |t0|/16, eliminating |t|^(1/2) and |t| tails."""
    order = np.argsort(-np.asarray(t_abs, dtype=float))
    f_a, f_b, f_c = np.asarray(masses, dtype=float)[order]
    return float((8.0 * f_c - 6.0 * f_b + f_a) / 3.0)


def gaussian_density(traj: FlowTrajectory, center_point, center_time: float,
                     cfg: KernelConfig = KernelConfig(), *, A: float = 0.0,
                     ladder_anchor: float | None = None,
                     t_window: tuple[float, float] | None = None):
    """Gaussian density at a spacetime point plus the monotone series.

    The density is extrapolated from the mass term at the three snapshot
    times nearest -a, -a/4, -a/16 with a = ladder_anchor (default: 16x the
    smallest available |t|).
    """
    series = monotone_series(traj, center_point, center_time, cfg, A=A,
                             t_window=t_window)
    t_abs = -series.times
    if ladder_anchor is None:
        anchor = 16.0 * float(t_abs.min())
    else:
        anchor = float(ladder_anchor)
    targets = [anchor, anchor / 4.0, anchor / 16.0]
    idx = []
    for tgt in targets:
        i = int(np.argmin(np.abs(t_abs - tgt)))
        if i in idx:
            raise ValueError("trajectory does not resolve the extrapolation ladder")
        idx.append(i)
    density = richardson_density(t_abs[idx], series.mass_terms[idx])
    return density, series


# ---------------------------------------------------------------------------
# tangent flows


@dataclass(frozen=True)
class TangentFlowResult:
    scales: tuple[float, ...]
    rescaled: tuple[np.ndarray, ...]
    classification: str  # plane | halfplane_multiplicity_k | shrinker_like | unresolved
    multiplicity: int | None
    density_estimate: float
    hausdorff: tuple[float, ...]


def _hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return math.inf
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
    return float(np.sqrt(max(d2.min(axis=1).max(), d2.min(axis=0).max())))


def tangent_flow(traj: FlowTrajectory, center_point, center_time: float,
                 scales, *, cfg: KernelConfig = KernelConfig(),
                 clip_radius: float = 1.5, shape_tol: float = 0.05) -> TangentFlowResult:
    """Parabolic rescaling (x, t) -> (L x, L^2 t) about the center.

    For each scale L the snapshot nearest t = -1/L^2 is recentred and
    dilated to live at rescaled time -1; the supports are compared across
    scales and classified.
    """
    center = np.asarray(center_point, dtype=float)
    scales = tuple(float(s) for s in scales)
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be increasing")
    clouds = []
    masses = []
    for lam in scales:
        t_target = center_time - 1.0 / lam**2
        snap = traj.snapshot_nearest(t_target)
        if snap.time >= center_time:
            clouds.append(np.zeros((0, 2)))
            masses.append(0.0)
            continue
        pts = np.concatenate([c.vertices for c in snap.network.curves])
        rescaled = lam * (pts - center)
        keep = np.linalg.norm(rescaled, axis=1) <= clip_radius
        clouds.append(rescaled[keep])
        mv = geometry.measure_of(snap.network)
        masses.append(lam * mv.mass_in_ball(center, clip_radius / lam))
    hd = tuple(_hausdorff(a, b) for a, b in zip(clouds, clouds[1:]))
    try:
        density, _ = gaussian_density(traj, center, center_time, cfg)
    except ValueError:
        density = float("nan")
    final = clouds[-1]
    if len(final) < 3 or (hd and not np.isfinite(hd[-1])):
        return TangentFlowResult(scales, tuple(clouds), "unresolved", None, density, hd)
    converged = (not hd) or hd[-1] < shape_tol
    # best line through the origin
    _, _, vt = np.linalg.svd(final, full_matrices=False)
    v = vt[0]
    proj = final @ v
    resid = float(np.abs(final - np.outer(proj, v)).max())
    extent = float(np.abs(proj).max())
    if resid <= shape_tol and extent > 0.2:
        two_sided = proj.min() < -0.1 * extent and proj.max() > 0.1 * extent
        if two_sided:
            return TangentFlowResult(scales, tuple(clouds), "plane", None, density, hd)
        span = max(extent, 1e-12)
        k = max(1, int(round(masses[-1] / span)))
        return TangentFlowResult(
            scales, tuple(clouds), f"halfplane_multiplicity_{k}", k, density, hd
        )
    if converged:
        return TangentFlowResult(scales, tuple(clouds), "shrinker_like", None, density, hd)
    return TangentFlowResult(scales, tuple(clouds), "unresolved", None, density, hd)


# ---------------------------------------------------------------------------
# wedge containment


@dataclass(frozen=True)
class Ray:
    direction: np.ndarray
    length: float
    mass: float
    multiplicity: int


@dataclass(frozen=True)
class WedgeTestResult:
    contained: bool
    opening: float
    wedge_directions: tuple[np.ndarray, np.ndarray] | None
    decomposition: tuple[Ray, ...] | None
    nu: np.ndarray | None
    non_standard_reasons: tuple[str, ...]


def _needed_opening(alpha: float, angles: np.ndarray, slack: np.ndarray) -> float:
    beta = np.mod(angles - alpha, 2.0 * np.pi)
    covered = np.minimum(beta, 2.0 * np.pi - beta) <= slack
    eff = np.where(covered, 0.0, beta - slack)
    return float(eff.max()) if len(eff) else 0.0


def wedge_test(v: varifold.DiscreteVarifold, edge_point, opening_limit: float = math.pi,
               *, dist_tol: float = 1e-9, cluster_tol: float = 1e-2,
               grid_step: float = 1e-3) -> WedgeTestResult:
    """Search for a wedge (angular sector of opening < pi) through the edge
    point containing all samples within dist_tol; if contained and the mass
    sits on at most three rays, return the integer-weighted ray decomposition
    and the boundary vector it induces."""
    if len(v.points) == 0:
        raise ValueError("empty varifold")
    pts = v.points - np.asarray(edge_point, dtype=float)
    r = np.linalg.norm(pts, axis=1)
    keep = r > max(dist_tol, 1e-12)
    pts_k, r_k, w_k = pts[keep], r[keep], v.weights[keep]
    if len(pts_k) == 0:
        return WedgeTestResult(True, 0.0, None, None, None, ())
    angles = np.arctan2(pts_k[:, 1], pts_k[:, 0])
    slack = np.arcsin(np.minimum(1.0, dist_tol / r_k))

    alphas = np.arange(-math.pi, math.pi, grid_step)
    needed = np.array([_needed_opening(a, angles, slack) for a in alphas])
    i = int(np.argmin(needed))
    best_alpha, best_w = float(alphas[i]), float(needed[i])
    lo, hi = best_alpha - grid_step, best_alpha + grid_step
    for _ in range(3):
        fine = np.linspace(lo, hi, 21)
        nf = np.array([_needed_opening(a, angles, slack) for a in fine])
        j = int(np.argmin(nf))
        if nf[j] < best_w:
            best_alpha, best_w = float(fine[j]), float(nf[j])
        lo, hi = best_alpha - (hi - lo) / 10, best_alpha + (hi - lo) / 10

    margin = grid_step
    contained = best_w < min(opening_limit, math.pi) - margin
    dirs = (
        np.array([math.cos(best_alpha), math.sin(best_alpha)]),
        np.array([math.cos(best_alpha + best_w), math.sin(best_alpha + best_w)]),
    )

    decomposition = None
    nu = None
    reasons: list[str] = []
    if contained:
        order = np.argsort(angles)
        sa = angles[order]
        breaks = np.nonzero(np.diff(sa) > cluster_tol)[0]
        groups = np.split(order, breaks + 1)
        if len(groups) > 1 and (sa[0] + 2 * math.pi - sa[-1]) <= cluster_tol:
            groups[0] = np.concatenate([groups[-1], groups[0]])
            groups = groups[:-1]
        if len(groups) <= 3:
            rays = []
            for g in groups:
                ux = float(np.mean(np.cos(angles[g])))
                uy = float(np.mean(np.sin(angles[g])))
                d = np.array([ux, uy])
                d /= np.linalg.norm(d)
                length = float(r_k[g].max())
                mass = float(w_k[g].sum())
                mult = max(1, int(round(mass / length)))
                rays.append(Ray(direction=d, length=length, mass=mass, multiplicity=mult))
            decomposition = tuple(rays)
            nu = -sum(ray.multiplicity * ray.direction for ray in rays)
            k_total = sum(ray.multiplicity for ray in rays)
            if k_total % 2 == 0:
                reasons.append(f"even incident multiplicity {k_total} (mod-2 boundary vanishes)")
            if np.linalg.norm(nu) > 1.0 + 1e-6:
                reasons.append(f"|nu| = {np.linalg.norm(nu):.6g} exceeds 1")
    return WedgeTestResult(
        contained=contained,
        opening=best_w,
        wedge_directions=dirs if contained else None,
        decomposition=decomposition,
        nu=nu,
        non_standard_reasons=tuple(reasons),
    )
