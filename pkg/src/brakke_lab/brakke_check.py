"""Verification of the integral inequalities along computed trajectories.

The defining inequality for a flow with (possibly moving) boundary,

    (Mu)(a) - (Mu)(b) >= int_a^b int (u|H|^2 - H.grad u - du/dt) dM dt
                          - int_a^b sum u (nu . Gamma_dot) dt,

is checked with edge-midpoint quadrature in space and the trapezoid rule
over snapshot times.  Inequalities must not fail by more than an explicit
tolerance tol(h, dt) = TOL_H * h + TOL_DT * dt whose constants were
calibrated once on the shrinking-circle run and then frozen.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry, varifold
from .flow import FlowSnapshot, FlowTrajectory, GraphState
from .monotonicity import _bump

# Frozen tolerance model, calibrated once on unit-circle runs at
# h in {0.04, 0.02, 0.01} (worst residual 3.1e-3, 6.8e-4, 1.7e-4; this
# budget keeps a 5-15x margin at every level) and never tuned per
# experiment.
TOL_H = 0.2
TOL_DT = 50.0


def tolerance(h: float, dt: float) -> float:
    return TOL_H * h + TOL_DT * dt


def _effective_h_dt(traj: FlowTrajectory) -> tuple[float, float]:
    h = traj.params.target_h if traj.params is not None else 0.01
    times = traj.times
    if len(times) >= 2:
        snap_spacing = float(np.median(np.diff(times)))
        every = traj.params.snapshot_every if traj.params is not None else 1
        dt = snap_spacing / max(1, every)
    else:
        dt = 0.0
    return h, dt


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Nonnegative compactly supported test function with its derivatives.

    All callables take (x, t).  For Lipschitz plus-part functions
    (lipschitz=True) the derivatives are only required on {u > 0} and
    validation sampling is restricted there.
    """

    value: callable
    gradient: callable
    hessian: callable
    dt: callable
    support_center: np.ndarray
    support_radius: float
    lipschitz: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "support_center",
                           np.asarray(self.support_center, dtype=float))


class TestFunctionError(ValueError):
    pass


def validate_test_function(u: TestFunction, t_span=(0.0, 1.0), *, seed: int = 0,
                           rtol: float = 1e-4, samples: int = 5) -> None:
    """Finite-difference consistency of gradient, hessian, and du/dt."""
    rng = np.random.default_rng(seed)
    c, R = u.support_center, u.support_radius
    checked = 0
    attempts = 0
    while checked < samples and attempts < 200:
        attempts += 1
        x = c + rng.uniform(-0.7, 0.7, size=len(c)) * R
        t = rng.uniform(*t_span)
        if u.lipschitz and u.value(x, t) <= 1e-9:
            continue
        val = u.value(x, t)
        if val < -1e-12:
            raise TestFunctionError(f"test function negative at {x}, t={t}")
        g = np.asarray(u.gradient(x, t), dtype=float)
        H = np.asarray(u.hessian(x, t), dtype=float)
        hstep = 1e-5 * max(1.0, R)
        fd_g = np.empty_like(g)
        fd_H = np.empty_like(H)
        for j in range(len(x)):
            ej = np.zeros(len(x))
            ej[j] = hstep
            fd_g[j] = (u.value(x + ej, t) - u.value(x - ej, t)) / (2 * hstep)
            fd_H[:, j] = (
                np.asarray(u.gradient(x + ej, t), float)
                - np.asarray(u.gradient(x - ej, t), float)
            ) / (2 * hstep)
        fd_t = (u.value(x, t + hstep) - u.value(x, t - hstep)) / (2 * hstep)
        scale = max(1.0, abs(val), float(np.abs(g).max()), float(np.abs(H).max()))
        if np.abs(g - fd_g).max() > rtol * scale:
            raise TestFunctionError("gradient inconsistent with value")
        if np.abs(H - fd_H).max() > 10 * rtol * scale:
            raise TestFunctionError("hessian inconsistent with gradient")
        if abs(u.dt(x, t) - fd_t) > rtol * scale:
            raise TestFunctionError("time derivative inconsistent with value")
        checked += 1
    if checked < samples:
        raise TestFunctionError("could not sample enough points with u > 0")


def radial_bump(center, r_inner: float, r_outer: float, *, name: str = "") -> TestFunction:
    """C^2 plateau: 1 inside r_inner, quintic decay to 0 at r_outer.

    The callables broadcast: x may be a single point (d,) or a batch (n, d).
    """
    center = np.asarray(center, dtype=float)
    width = r_outer - r_inner
    if width <= 0:
        raise ValueError("need r_inner < r_outer")

    def _radial(x):
        d = np.asarray(x, dtype=float) - center
        r = np.linalg.norm(d, axis=-1)
        inside = (r > r_inner) & (r < r_outer)
        u = np.clip((np.asarray(r) - r_inner) / width, 0.0, 1.0)
        q, dq, _ = _bump(u)
        psi = np.where(np.asarray(r) <= r_inner, 1.0,
                       np.where(np.asarray(r) >= r_outer, 0.0, q))
        dpsi = np.where(inside, dq / width, 0.0)
        return d, r, psi, dpsi

    def value(x, t):
        _, _, psi, _ = _radial(x)
        return psi if psi.ndim else float(psi)

    def gradient(x, t):
        d, r, _, dpsi = _radial(x)
        safe = np.maximum(np.asarray(r), 1e-300)
        return (dpsi / safe)[..., None] * d

    def ddpsi_at(r):
        if r <= r_inner or r >= r_outer:
            return 0.0
        u = (r - r_inner) / width
        return float(_bump(np.asarray(u))[2]) / width**2

    def dpsi_at(r):
        if r <= r_inner or r >= r_outer:
            return 0.0
        u = (r - r_inner) / width
        return float(_bump(np.asarray(u))[1]) / width

    def hessian(x, t):
        d = np.asarray(x, dtype=float) - center
        r = float(np.linalg.norm(d))
        n = len(d)
        if r == 0.0:
            return ddpsi_at(0.0) * np.eye(n)
        P = np.outer(d, d) / (r * r)
        return ddpsi_at(r) * P + dpsi_at(r) / r * (np.eye(n) - P)

    def dt(x, t):
        r = np.linalg.norm(np.asarray(x, dtype=float) - center, axis=-1)
        z = np.zeros_like(np.asarray(r))
        return z if z.ndim else 0.0

    return TestFunction(
        value=value, gradient=gradient, hessian=hessian, dt=dt,
        support_center=center, support_radius=r_outer,
        name=name or f"bump({r_inner},{r_outer})",
    )


def scaled_in_time(u: TestFunction, rate: float) -> TestFunction:
    """(1 + rate * t) * u, a simple time-dependent nonnegative variant."""

    def factor(t):
        return 1.0 + rate * t

    return TestFunction(
        value=lambda x, t: factor(t) * u.value(x, t),
        gradient=lambda x, t: factor(t) * np.asarray(u.gradient(x, t)),
        hessian=lambda x, t: factor(t) * np.asarray(u.hessian(x, t)),
        dt=lambda x, t: rate * u.value(x, t) + factor(t) * u.dt(x, t),
        support_center=u.support_center,
        support_radius=u.support_radius,
        lipschitz=u.lipschitz,
        name=f"{u.name}*(1+{rate}t)",
    )


def parabolic_cap(center, R: float, m: int = 1, *, t_origin: float = 0.0) -> TestFunction:
    """The Lipschitz cap u = (R^2 - |x-c|^2 - 4 m (t - t_origin))^+.

    Derivatives are clamped to zero off {u > 0}; callables broadcast."""
    center = np.asarray(center, dtype=float)

    def raw(x, t):
        d = np.asarray(x, dtype=float) - center
        return R * R - np.einsum("...i,...i->...", d, d) - 4.0 * m * (t - t_origin)

    def value(x, t):
        v = np.maximum(0.0, raw(x, t))
        return v if np.asarray(v).ndim else float(v)

    def gradient(x, t):
        d = np.asarray(x, dtype=float) - center
        pos = raw(x, t) > 0
        return np.where(np.asarray(pos)[..., None], -2.0 * d, 0.0)

    def hessian(x, t):
        n = len(center)
        return (-2.0 * np.eye(n)) if raw(x, t) > 0 else np.zeros((n, n))

    def dt(x, t):
        pos = np.asarray(raw(x, t)) > 0
        out = np.where(pos, -4.0 * m, 0.0)
        return out if out.ndim else float(out)

    return TestFunction(
        value=value, gradient=gradient, hessian=hessian, dt=dt,
        support_center=center, support_radius=R, lipschitz=True,
        name=f"cap(R={R})",
    )


# ---------------------------------------------------------------------------
# quadrature helpers


def _mass_u(snapshot: FlowSnapshot, u: TestFunction) -> float:
    v = varifold.to_varifold(snapshot.network)
    t = snapshot.time
    vals = np.asarray(u.value(v.points, t), dtype=float)
    return float(vals @ v.weights)


def _dissipation_terms(snapshot: FlowSnapshot, u: TestFunction):
    """(int u|H|^2, int H.grad u, int du/dt) at one snapshot.

    The H terms use vertex quadrature (that is where H lives), du/dt uses
    the same edge-midpoint rule as the mass."""
    t = snapshot.time
    uh2 = 0.0
    hgrad = 0.0
    for c, (idx, H) in zip(snapshot.network.curves, snapshot.curvatures):
        if len(idx) == 0:
            continue
        v = c.vertices
        lens = geometry.edge_lengths(v)
        w = c.multiplicity * (lens[idx - 1] + lens[idx % len(lens)]) / 2.0
        x = v[idx]
        uvals = np.asarray(u.value(x, t), dtype=float)
        uh2 += float((w * uvals) @ np.einsum("ij,ij->i", H, H))
        grads = np.asarray(u.gradient(x, t), dtype=float)
        hgrad += float(w @ np.einsum("ij,ij->i", H, grads))
    vv = varifold.to_varifold(snapshot.network)
    ut = float(np.asarray(u.dt(vv.points, t), dtype=float) @ vv.weights)
    return uh2, hgrad, ut


def _moving_term(snapshot: FlowSnapshot, u: TestFunction) -> float:
    """sum over moving boundary points of u * (nu . Gamma_dot)."""
    total = 0.0
    net = snapshot.network
    for bid, nu in snapshot.boundary_nu.items():
        traj = net.boundary_points[bid]
        if isinstance(traj, geometry.BoundaryTrajectory):
            pos = traj.position(snapshot.time)
            gdot = traj.velocity(snapshot.time)
            total += u.value(pos, snapshot.time) * float(nu @ gdot)
    return total


def _trapezoid(times: np.ndarray, values: np.ndarray) -> float:
    return float(np.trapezoid(values, times))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    residual: float
    tol: float
    verdict: str
    interval: tuple[float, float]
    components: dict = field(default_factory=dict)
    refinement_residuals: tuple = ()

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "tol": self.tol,
            "verdict": self.verdict,
            "interval": list(self.interval),
            "components": self.components,
            "refinement_table": [list(r) for r in self.refinement_residuals],
        }


def dump_report(report, path) -> None:
    with open(path, "w") as f:
        json.dump(report.to_json(), f, indent=1, sort_keys=True)


def _select_snapshots(traj: FlowTrajectory, a: float, b: float):
    lo, hi = traj.span()
    if a < lo - 1e-12 or b > hi + 1e-12 or a >= b:
        raise ValueError(f"[{a}, {b}] outside trajectory span [{lo}, {hi}]")
    snaps = [s for s in traj.snapshots
             if a - 1e-12 <= s.time <= b + 1e-12]
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots in [a, b]")
    return snaps


def brakke_inequality(traj: FlowTrajectory, u: TestFunction, a: float, b: float,
                      *, moving: bool = False, seed: int = 0,
                      sign_flip: str | None = None) -> InequalityReport:
    """Check the defining inequality on [a, b] (snapped to snapshot times).

    sign_flip is a negative-control switch ('h_grad' or 'gamma_dot') that
    deliberately corrupts one term so detector sensitivity can be audited.
    """
    validate_test_function(u, t_span=(a, b), seed=seed)
    snaps = _select_snapshots(traj, a, b)
    times = np.array([s.time for s in snaps])
    mu_a = _mass_u(snaps[0], u)
    mu_b = _mass_u(snaps[-1], u)
    lhs = mu_a - mu_b
    uh2 = np.empty(len(snaps))
    hgrad = np.empty(len(snaps))
    ut = np.empty(len(snaps))
    for i, s in enumerate(snaps):
        uh2[i], hgrad[i], ut[i] = _dissipation_terms(s, u)
    grad_sign = -1.0 if sign_flip == "h_grad" else 1.0
    rhs = _trapezoid(times, uh2 - grad_sign * hgrad - ut)
    components = {
        "u_h2": _trapezoid(times, uh2),
        "h_grad_u": _trapezoid(times, hgrad),
        "u_t": _trapezoid(times, ut),
        "mass_a": mu_a,
        "mass_b": mu_b,
    }
    if moving:
        mov = np.array([_moving_term(s, u) for s in snaps])
        mv_sign = -1.0 if sign_flip == "gamma_dot" else 1.0
        mov_int = mv_sign * _trapezoid(times, mov)
        rhs -= mov_int
        components["gamma_dot_term"] = mov_int
    h, dt = _effective_h_dt(traj)
    tol = tolerance(h, dt)
    residual = lhs - rhs
    return InequalityReport(
        lhs=lhs, rhs=rhs, residual=residual, tol=tol,
        verdict="pass" if residual >= -tol else "fail",
        interval=(float(times[0]), float(times[-1])),
        components=components,
    )


def brakke_inequality_moving(traj: FlowTrajectory, u: TestFunction, a: float,
                             b: float, *, seed: int = 0,
                             sign_flip: str | None = None) -> InequalityReport:
    return brakke_inequality(traj, u, a, b, moving=True, seed=seed,
                             sign_flip=sign_flip)


# ---------------------------------------------------------------------------
# localized area bound


@dataclass(frozen=True)
class AreaBoundReport:
    passes: bool
    worst_violation: float
    tol: float
    gamma_count: int
    times: tuple = ()
    values: tuple = ()
    allowances: tuple = ()

    def to_json(self) -> dict:
        return {
            "verdict": "pass" if self.passes else "fail",
            "worst_violation": self.worst_violation,
            "tol": self.tol,
            "gamma_count": self.gamma_count,
            "times": list(self.times),
            "values": list(self.values),
            "allowances": list(self.allowances),
        }


def area_bound_check(traj: FlowTrajectory, center, R: float,
                     tol: float | None = None) -> AreaBoundReport:
    """(Mu)(t) <= (Mu)(0) + t (R + delta R^2) #(Gamma in B(center, R)) for
    u = (R^2 - dist^2 - 4 m t)^+, m = 1; delta = 0 for static boundaries,
    otherwise the largest boundary speed seen inside the ball."""
    center = np.asarray(center, dtype=float)
    t0 = traj.snapshots[0].time
    u = parabolic_cap(center, R, m=1, t_origin=t0)
    snaps = traj.snapshots
    first_net = snaps[0].network
    count = 0
    delta = 0.0
    for bid in first_net.boundary_points:
        p = first_net.boundary_points[bid]
        if isinstance(p, geometry.BoundaryTrajectory):
            inside = False
            for s in snaps:
                pos = p.position(s.time)
                if np.linalg.norm(pos - center) < R:
                    inside = True
                    delta = max(delta, float(np.linalg.norm(p.velocity(s.time))))
            if inside:
                count += 1
        else:
            if np.linalg.norm(p - center) < R:
                count += 1
    if tol is None:
        h, _ = _effective_h_dt(traj)
        mass_sup = max(s.total_mass for s in snaps)
        tol = 1e-6 + h * h * (mass_sup / 6.0 + 8.0 * R)
    mu0 = _mass_u(snaps[0], u)
    times, values, allowances = [], [], []
    worst = -math.inf
    for s in snaps:
        t = s.time - t0
        mu = _mass_u(s, u)
        allow = mu0 + t * (R + delta * R * R) * count
        times.append(t)
        values.append(mu)
        allowances.append(allow)
        worst = max(worst, mu - allow)
    return AreaBoundReport(
        passes=worst <= tol, worst_violation=worst, tol=tol, gamma_count=count,
        times=tuple(times), values=tuple(values), allowances=tuple(allowances),
    )


# ---------------------------------------------------------------------------
# H^2 control


@dataclass(frozen=True)
class H2BoundReport:
    lhs: float
    rhs: float
    residual: float
    tol: float
    verdict: str
    max_hessian: float
    k_mass: float

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual,
            "tol": self.tol, "verdict": self.verdict,
            "max_hessian": self.max_hessian, "k_mass": self.k_mass,
        }


def h_squared_bound(traj: FlowTrajectory, u: TestFunction, a: float, b: float,
                    *, seed: int = 0, hess_grid: int = 41) -> H2BoundReport:
    """(1/2) int int u |H|^2 <= Mu(a) - Mu(b) + (b-a) max|hess u| K_[a,b]."""
    validate_test_function(u, t_span=(a, b), seed=seed)
    x = u.support_center + np.array([0.3, -0.2]) * u.support_radius
    if abs(u.dt(x, a)) > 1e-12 or abs(u.dt(x, b)) > 1e-12:
        raise ValueError("h_squared_bound requires a time-independent u")
    snaps = _select_snapshots(traj, a, b)
    times = np.array([s.time for s in snaps])
    uh2 = np.array([_dissipation_terms(s, u)[0] for s in snaps])
    lhs = 0.5 * _trapezoid(times, uh2)
    c, R = u.support_center, u.support_radius
    xs = np.linspace(c[0] - R, c[0] + R, hess_grid)
    ys = np.linspace(c[1] - R, c[1] + R, hess_grid)
    max_hess = 0.0
    for x in xs:
        for y in ys:
            p = np.array([x, y])
            if np.linalg.norm(p - c) <= R:
                Hm = np.asarray(u.hessian(p, a), dtype=float)
                max_hess = max(max_hess, float(np.linalg.norm(Hm, 2)))
    k_mass = max(
        geometry.measure_of(s.network).mass_in_ball(c, R) for s in snaps
    )
    rhs = _mass_u(snaps[0], u) - _mass_u(snaps[-1], u) \
        + (times[-1] - times[0]) * max_hess * k_mass
    h, dt = _effective_h_dt(traj)
    tol = tolerance(h, dt)
    residual = rhs - lhs
    return H2BoundReport(
        lhs=lhs, rhs=rhs, residual=residual, tol=tol,
        verdict="pass" if residual >= -tol else "fail",
        max_hessian=max_hess, k_mass=k_mass,
    )


# ---------------------------------------------------------------------------
# avoidance principle


def _polyline_segments(net) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.concatenate([c.vertices for c in net.curves])
    starts = np.concatenate([c.vertices[:-1] for c in net.curves])
    ends = np.concatenate([c.vertices[1:] for c in net.curves])
    return pts, starts, ends


def _points_to_segments(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    AB = B - A
    denom = np.maximum((AB * AB).sum(axis=1), 1e-300)
    AP = P[:, None, :] - A[None, :, :]
    tt = np.clip((AP * AB[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
    proj = A[None, :, :] + tt[..., None] * AB[None, :, :]
    d2 = ((P[:, None, :] - proj) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min()))


def support_distance(net_a, net_b) -> float:
    """Exact min distance between two networks' polyline supports."""
    pa, sa, ea = _polyline_segments(net_a)
    pb, sb, eb = _polyline_segments(net_b)
    return min(_points_to_segments(pa, sb, eb), _points_to_segments(pb, sa, ea))


def _graph_states_to_networks(states: list[GraphState]):
    nets = []
    for s in states:
        pts = np.stack([s.x, s.u], axis=1)
        nets.append((s.t, geometry.Network(curves=(geometry.DiscreteCurve(pts),))))
    return nets


@dataclass(frozen=True)
class AvoidanceReport:
    passes: bool
    times: tuple
    distances: tuple
    d0: float
    delta: float
    tol: float

    def to_json(self) -> dict:
        return {
            "verdict": "pass" if self.passes else "fail",
            "times": list(self.times), "distances": list(self.distances),
            "d0": self.d0, "delta": self.delta, "tol": self.tol,
        }


def avoidance_check(traj: FlowTrajectory, barrier, tol: float | None = None) -> AvoidanceReport:
    """Supports must stay disjoint: d(t) > 0 and d(t) >= delta - tol, where
    delta is the smallest of the initial separation and the boundary
    separations entering the maximum-principle hypotheses (Euclidean
    ambient, so no Ricci factor)."""
    if isinstance(barrier, FlowTrajectory):
        barrier_states = [(s.time, s.network) for s in barrier.snapshots]
    else:
        barrier_states = _graph_states_to_networks(list(barrier))
    b_times = np.array([t for t, _ in barrier_states])

    times, dists = [], []
    sep_barrier_bdry = math.inf
    sep_gamma = math.inf
    for s in traj.snapshots:
        j = int(np.argmin(np.abs(b_times - s.time)))
        bt, bnet = barrier_states[j]
        d = support_distance(s.network, bnet)
        times.append(s.time)
        dists.append(d)
        # barrier boundary (pinned curve ends) vs flow support
        bdry = [c.vertices[k] for c in bnet.curves
                for k, con in ((0, c.start_constraint), (-1, c.end_constraint))
                if con.kind in ("fixed", "moving")]
        if bdry:
            _, sa, ea = _polyline_segments(s.network)
            sep_barrier_bdry = min(
                sep_barrier_bdry, _points_to_segments(np.array(bdry), sa, ea)
            )
        gam = [s.network.boundary_position(bid) for bid in s.network.boundary_points]
        if gam:
            _, sb2, eb2 = _polyline_segments(bnet)
            sep_gamma = min(sep_gamma, _points_to_segments(np.array(gam), sb2, eb2))

    d0 = dists[0]
    if d0 <= 0.0:
        raise ValueError("avoidance hypotheses violated: supports meet at t=0")
    if sep_barrier_bdry <= 0.0 or sep_gamma <= 0.0:
        raise ValueError("avoidance hypotheses violated: boundary separations vanish")
    if tol is None:
        h, dt = _effective_h_dt(traj)
        tol = tolerance(h, dt)
    delta = min(d0, sep_barrier_bdry, sep_gamma)
    ok = all(d > 0.0 and d >= delta - tol for d in dists)
    return AvoidanceReport(
        passes=ok, times=tuple(times), distances=tuple(dists),
        d0=d0, delta=delta, tol=tol,
    )
