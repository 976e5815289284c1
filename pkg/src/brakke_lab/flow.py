"""Time evolution of curve networks and of graphical fronts.

Interior vertices move by the discrete curvature vector (explicit Euler
under a CFL bound, or a linearized backward-Euler solve); pinned endpoints
stay put or follow their prescribed trajectory; junctions are repositioned
every step so the incident outward unit tangents sum to zero, which is the
equal-angle condition for three multiplicity-one curves.  Stepping stops at
singular events instead of performing surgery.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import geometry, varifold
from .geometry import DiscreteCurve, Network


@dataclass(frozen=True)
class FlowParams:
    target_h: float
    t_end: float
    dt_safety: float = 0.5
    scheme: str = "explicit"  # or "semi_implicit"
    resample_every: int = 10
    snapshot_every: int = 10
    vanish_length: float | None = None  # default 6 * target_h
    initial_resample: bool = True
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not 0 < self.dt_safety <= 1:
            raise ValueError("dt_safety must lie in (0, 1]")
        if self.scheme not in ("explicit", "semi_implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.target_h <= 0:
            raise ValueError("target_h must be positive")

    @property
    def vanish_threshold(self) -> float:
        return self.vanish_length if self.vanish_length is not None else 6.0 * self.target_h


@dataclass(frozen=True)
class FlowEvent:
    time: float
    kind: str  # junction_hit_boundary | curve_vanished | curvature_blowup
    location: np.ndarray


@dataclass(frozen=True)
class FlowSnapshot:
    """State at one time: network, per-vertex H, per-boundary-point nu, mass."""

    time: float
    network: Network
    curvatures: tuple[tuple[np.ndarray, np.ndarray], ...]  # (indices, H rows) per curve
    boundary_nu: dict[str, np.ndarray]
    total_mass: float


@dataclass(frozen=True)
class FlowTrajectory:
    snapshots: tuple[FlowSnapshot, ...]
    events: tuple[FlowEvent, ...] = ()
    params: FlowParams | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def snapshot_nearest(self, t: float) -> FlowSnapshot:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[i]

    def span(self) -> tuple[float, float]:
        ts = self.times
        return float(ts[0]), float(ts[-1])


def _snapshot(network: Network, time: float) -> FlowSnapshot:
    curvatures = []
    for c in network.curves:
        if len(c.vertices) >= 3:
            curvatures.append(geometry.curvature_array(c))
        else:
            curvatures.append((np.zeros(0, dtype=int), np.zeros((0, c.dim))))
    nu = {b.at: b.nu for b in varifold.boundary_vectors(network)}
    return FlowSnapshot(
        time=time,
        network=network,
        curvatures=tuple(curvatures),
        boundary_nu=nu,
        total_mass=geometry.measure_of(network).total_mass,
    )


def static_trajectory(network: Network, times) -> FlowTrajectory:
    """A constant-in-time trajectory (for density/monotonicity of steady states)."""
    snaps = tuple(_snapshot(replace(network, time=float(t)), float(t)) for t in times)
    return FlowTrajectory(snapshots=snaps)


# ---------------------------------------------------------------------------
# junction balancing


def balance_junction(neighbors: np.ndarray, p0: np.ndarray, tol: float = 1e-10,
                     max_iter: int = 50) -> tuple[np.ndarray, float, bool]:
    """Newton solve for sum_k (p - q_k)/|p - q_k| = 0.

    This is the gradient of the convex spoke-length sum, so damped Newton
    with backtracking converges globally; if the minimizer sits at a
    neighbor (the >120-degree case) the residual cannot reach tol and the
    caller sees converged=False.
    """
    p = np.array(p0, dtype=float)
    d = len(p)

    def residual(pt):
        diffs = pt - neighbors
        dists = np.linalg.norm(diffs, axis=1)
        if np.any(dists < 1e-300):
            return None, None, None
        units = diffs / dists[:, None]
        return units.sum(axis=0), units, dists

    F, units, dists = residual(p)
    if F is None:
        return p, np.inf, False
    for _ in range(max_iter):
        r = float(np.linalg.norm(F))
        if r < tol:
            return p, r, True
        J = np.zeros((d, d))
        for u, dist in zip(units, dists):
            J += (np.eye(d) - np.outer(u, u)) / dist
        try:
            step = -np.linalg.solve(J + 1e-12 * np.eye(d), F)
        except np.linalg.LinAlgError:
            break
        # keep the iterate strictly away from the spoke neighbors
        max_len = 0.5 * float(dists.min())
        sl = float(np.linalg.norm(step))
        if sl > max_len:
            step *= max_len / sl
        for _ in range(30):
            cand = p + step
            Fc, uc, dc = residual(cand)
            if Fc is not None and np.linalg.norm(Fc) <= r * (1 - 1e-4) + tol:
                p, F, units, dists = cand, Fc, uc, dc
                break
            step *= 0.5
        else:
            break
    return p, float(np.linalg.norm(F)), False


# ---------------------------------------------------------------------------
# network stepping


class _WorkingState:
    """Mutable vertex arrays plus constraint topology for the run loop."""

    def __init__(self, network: Network):
        self.curves = [c.vertices.copy() for c in network.curves]
        self.meta = [
            (c.multiplicity, c.start_constraint, c.end_constraint, c.is_closed)
            for c in network.curves
        ]
        self.boundary_points = dict(network.boundary_points)
        self.junctions = {k: v.copy() for k, v in network.junctions.items()}
        # junction id -> list of (curve index, end index 0|-1)
        self.junction_ends: dict[str, list[tuple[int, int]]] = {k: [] for k in self.junctions}
        for ci, (_, sc, ec, _) in enumerate(self.meta):
            if sc.kind == "junction":
                self.junction_ends[sc.ref].append((ci, 0))
            if ec.kind == "junction":
                self.junction_ends[ec.ref].append((ci, -1))

    def network(self, time: float) -> Network:
        curves = tuple(
            DiscreteCurve(v.copy(), mult, sc, ec)
            for v, (mult, sc, ec, _) in zip(self.curves, self.meta)
        )
        return Network(
            curves=curves,
            boundary_points=self.boundary_points,
            junctions={k: v.copy() for k, v in self.junctions.items()},
            time=time,
        )

    def boundary_position(self, ref, t):
        p = self.boundary_points[ref]
        if isinstance(p, geometry.BoundaryTrajectory):
            return p.position(t)
        return p

    def min_edge(self) -> float:
        return min(float(geometry.edge_lengths(v).min()) for v in self.curves)

    def total_length(self) -> float:
        return float(
            math.fsum(
                mult * math.fsum(geometry.edge_lengths(v))
                for v, (mult, _, _, _) in zip(self.curves, self.meta)
            )
        )


def _explicit_move(v: np.ndarray, closed: bool, dt: float) -> np.ndarray:
    lens = np.linalg.norm(np.diff(v, axis=0), axis=1)
    if np.any(lens < geometry.DEGENERATE_EDGE):
        raise geometry.DegenerateEdgeError("degenerate edge during stepping")
    units = np.diff(v, axis=0) / lens[:, None]
    out = v.copy()
    h_int = 2.0 * (units[1:] - units[:-1]) / (lens[1:] + lens[:-1])[:, None]
    out[1:-1] += dt * h_int
    if closed:
        h0 = 2.0 * (units[0] - units[-1]) / (lens[0] + lens[-1])
        out[0] += dt * h0
        out[-1] = out[0]
    return out


def _semi_implicit_move(v: np.ndarray, closed: bool, dt: float) -> np.ndarray:
    """Backward-Euler with edge coefficients frozen at the current state."""
    lens = np.linalg.norm(np.diff(v, axis=0), axis=1)
    if closed:
        pts = v[:-1]
        n = len(pts)
        lm = np.roll(lens, 1)   # edge behind vertex i
        lp = lens               # edge ahead of vertex i
        a = 2.0 * dt / (lm + lp)
        lower = -a / lm
        upper = -a / lp
        diag = 1.0 + a / lm + a / lp
        A = scipy.sparse.diags([diag], [0], format="lil")
        for i in range(n):
            A[i, (i - 1) % n] = lower[i]
            A[i, (i + 1) % n] = upper[i]
        sol = scipy.sparse.linalg.spsolve(A.tocsr(), pts)
        out = np.vstack([sol, sol[0]])
        return out
    n = len(v)
    if n < 3:
        return v.copy()
    lm = lens[:-1]
    lp = lens[1:]
    a = 2.0 * dt / (lm + lp)
    diag = 1.0 + a / lm + a / lp
    lower = -a[1:] / lm[1:]
    upper = -a[:-1] / lp[:-1]
    A = scipy.sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")
    rhs = v[1:-1].copy()
    rhs[0] += (a[0] / lm[0]) * v[0]
    rhs[-1] += (a[-1] / lp[-1]) * v[-1]
    out = v.copy()
    out[1:-1] = scipy.sparse.linalg.spsolve(A, rhs)
    return out


def step_network(snapshot: FlowSnapshot, params: FlowParams) -> FlowSnapshot:
    """Advance one step; standalone single-step entry point mirroring run()."""
    state = _WorkingState(snapshot.network)
    t = snapshot.time
    dt = _choose_dt(state, params, t)
    t_new = _advance(state, t, dt, params)
    return _snapshot(state.network(t_new), t_new)


def _choose_dt(state: _WorkingState, params: FlowParams, t: float) -> float:
    if params.scheme == "explicit":
        dt = params.dt_safety * state.min_edge() ** 2 / 2.0
    else:
        dt = params.dt_safety * params.target_h
    return min(dt, max(params.t_end - t, 1e-300))


def _advance(state: _WorkingState, t: float, dt: float, params: FlowParams) -> float:
    """Move interior vertices, then endpoints, then rebalance junctions.

    Junctions are placed by the Newton balance (quasi-static equal-angle
    condition).  When no balanced position exists -- the incident tangents
    span less than 120 degrees, as when a junction migrates into a boundary
    vertex -- the junction instead takes one explicit step of the length
    gradient flow, scaled by its dual mass, which is CFL-stable and
    refinement-convergent.
    """
    t_new = t + dt
    mover = _explicit_move if params.scheme == "explicit" else _semi_implicit_move
    for ci, v in enumerate(state.curves):
        _, sc, ec, closed = state.meta[ci]
        if len(v) >= 3 or closed:
            state.curves[ci] = mover(v, closed, dt)
    # pinned endpoints
    for ci, v in enumerate(state.curves):
        _, sc, ec, _ = state.meta[ci]
        for constraint, idx in ((sc, 0), (ec, -1)):
            if constraint.kind == "fixed":
                v[idx] = state.boundary_position(constraint.ref, t)
            elif constraint.kind == "moving":
                v[idx] = state.boundary_position(constraint.ref, t_new)
    # junction update
    for jid, ends in state.junction_ends.items():
        p_old = state.junctions[jid]
        neighbors = np.array(
            [state.curves[ci][1 if idx == 0 else -2] for ci, idx in ends]
        )
        p, res, ok = balance_junction(neighbors, p_old)
        if not ok:
            diffs = p_old - neighbors
            dists = np.linalg.norm(diffs, axis=1)
            force = (diffs / dists[:, None]).sum(axis=0)
            mass = dists.sum() / 2.0
            step = -dt * force / mass
            cap = 0.45 * float(dists.min())
            sl = float(np.linalg.norm(step))
            if sl > cap:
                step *= cap / sl
            p = p_old + step
        state.junctions[jid] = p
        for ci, idx in ends:
            state.curves[ci][idx] = p
    return t_new


def _resample_out_of_band(state: _WorkingState, params: FlowParams) -> None:
    h = params.target_h
    touched = False
    for ci, v in enumerate(state.curves):
        mult, sc, ec, _ = state.meta[ci]
        lens = geometry.edge_lengths(v)
        if lens.min() < 0.5 * h or lens.max() > 2.0 * h:
            c = DiscreteCurve(v, mult, sc, ec)
            state.curves[ci] = geometry.resample(c, h).vertices.copy()
            touched = True
    if touched:
        # resampling moves junction neighbors; restore the balance condition
        for jid, ends in state.junction_ends.items():
            neighbors = np.array(
                [state.curves[ci][1 if idx == 0 else -2] for ci, idx in ends]
            )
            p, _, ok = balance_junction(neighbors, state.junctions[jid])
            if ok:
                state.junctions[jid] = p
                for ci, idx in ends:
                    state.curves[ci][idx] = p


def run(network: Network, params: FlowParams) -> FlowTrajectory:
    """Iterate the flow with adaptive dt, band-triggered resampling, and
    event detection; the flow stops at the first singular event."""
    state = _WorkingState(network)
    if params.initial_resample:
        _resample_out_of_band(state, params)
    t = float(network.time)
    snapshots = [_snapshot(state.network(t), t)]
    events: list[FlowEvent] = []

    def record(time):
        snapshots.append(_snapshot(state.network(time), time))

    step = 0
    while t < params.t_end - 1e-15 and step < params.max_steps:
        dt = _choose_dt(state, params, t)
        t = _advance(state, t, dt, params)
        step += 1

        if step % params.resample_every == 0:
            _resample_out_of_band(state, params)
            if state.min_edge() < 1e-3 * params.target_h:
                loc = min(
                    (v for v in state.curves),
                    key=lambda v: geometry.edge_lengths(v).min(),
                )[0]
                events.append(FlowEvent(t, "curvature_blowup", np.array(loc)))
                record(t)
                break

        # junction within resolution of a boundary point: boundary singularity
        hit = None
        for jid, p in state.junctions.items():
            for bid in state.boundary_points:
                bpos = state.boundary_position(bid, t)
                if np.linalg.norm(p - bpos) < params.target_h:
                    hit = FlowEvent(t, "junction_hit_boundary", np.array(bpos))
                    break
            if hit:
                break
        if hit:
            events.append(hit)
            record(t)
            break

        vanished = None
        for ci, v in enumerate(state.curves):
            mult, sc, ec, closed = state.meta[ci]
            free_ends = sc.kind == "free" and ec.kind == "free"
            if free_ends and math.fsum(geometry.edge_lengths(v)) < params.vanish_threshold:
                vanished = FlowEvent(t, "curve_vanished", v.mean(axis=0))
                break
        if vanished:
            events.append(vanished)
            record(t)
            break

        if step % params.snapshot_every == 0:
            record(t)

    if not events and (not snapshots or snapshots[-1].time < t):
        record(t)
    return FlowTrajectory(snapshots=tuple(snapshots), events=tuple(events), params=params)


# ---------------------------------------------------------------------------
# trajectory export (CSV series + per-snapshot network JSON)


def export_trajectory(traj: FlowTrajectory, out_dir, *, snapshots: bool = True) -> str:
    os.makedirs(out_dir, exist_ok=True)
    jids = sorted(traj.snapshots[0].network.junctions) if traj.snapshots else []
    csv_path = os.path.join(out_dir, "trajectory.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["time", "total_mass", "num_events"]
        for j in jids:
            dim = traj.snapshots[0].network.dim
            header.extend(f"junction_{j}_{ax}" for ax in "xyz"[:dim])
        w.writerow(header)
        for s in traj.snapshots:
            n_ev = sum(1 for e in traj.events if e.time <= s.time)
            row = [f"{s.time:.17g}", f"{s.total_mass:.17g}", n_ev]
            for j in jids:
                row.extend(f"{c:.17g}" for c in s.network.junctions[j])
            w.writerow(row)
    if snapshots:
        snap_dir = os.path.join(out_dir, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for i, s in enumerate(traj.snapshots):
            geometry.save_network(s.network, os.path.join(snap_dir, f"net_{i:06d}.json"))
    return csv_path


# ---------------------------------------------------------------------------
# graphical (nonparametric) mean curvature flow, used for barriers


@dataclass(frozen=True)
class GraphState:
    """Sampled function on a uniform grid, evolving by graphical MCF.

    Interval mode solves u_t = u_xx / (1 + u_x^2) on [x0, x1]; radial mode
    solves u_t = u_rr / (1 + u_r^2) + (m-1) u_r / r on [0, R] with a
    symmetry condition at r = 0.  Dirichlet data may depend on time.
    """

    x: np.ndarray
    u: np.ndarray
    t: float = 0.0
    bc: tuple = (0.0, 0.0)
    mode: str = "interval"
    m: int = 1

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def bc_value(self, side: int, t: float) -> float:
        b = self.bc[side]
        return float(b(t)) if callable(b) else float(b)

    def gradient(self) -> np.ndarray:
        return np.gradient(self.u, self.dx)


def step_graph(state: GraphState, dt: float) -> GraphState:
    dx = state.dx
    if dt > 0.5 * dx * dx * (1 + 1e-12):
        raise ValueError("dt exceeds the explicit stability bound dx^2/2")
    u = state.u
    t_new = state.t + dt
    ux = (u[2:] - u[:-2]) / (2 * dx)
    uxx = (u[2:] - 2 * u[1:-1] + u[:-2]) / (dx * dx)
    unew = u.copy()
    if state.mode == "interval":
        unew[1:-1] = u[1:-1] + dt * uxx / (1.0 + ux * ux)
        unew[0] = state.bc_value(0, t_new)
        unew[-1] = state.bc_value(1, t_new)
    elif state.mode == "radial":
        r = state.x[1:-1]
        unew[1:-1] = u[1:-1] + dt * (uxx / (1.0 + ux * ux) + (state.m - 1) * ux / r)
        if state.x[0] == 0.0:
            # symmetric center: u_r(0)=0, u_t = m u_rr with ghost u[-1]=u[1]
            uxx0 = 2.0 * (u[1] - u[0]) / (dx * dx)
            unew[0] = u[0] + dt * state.m * uxx0
        else:
            unew[0] = state.bc_value(0, t_new)
        unew[-1] = state.bc_value(1, t_new)
    else:
        raise ValueError(f"unknown graph mode {state.mode!r}")
    return replace(state, u=unew, t=t_new)


def run_graph(state: GraphState, t_end: float, *, safety: float = 0.9,
              record_every: int = 100) -> list[GraphState]:
    dt_max = safety * 0.5 * state.dx ** 2
    states = [state]
    k = 0
    while state.t < t_end - 1e-15:
        dt = min(dt_max, t_end - state.t)
        state = step_graph(state, dt)
        k += 1
        if k % record_every == 0:
            states.append(state)
    if states[-1].t < state.t:
        states.append(state)
    return states


@dataclass(frozen=True)
class GradientBoundReport:
    applicable: bool
    initial_sup: float
    boundary_sup: float
    max_sup: float
    passes: bool
    note: str = ""


def gradient_bound_check(states: list[GraphState], c1_limit: float = 0.1) -> GradientBoundReport:
    """Discrete gradient maximum principle: sup_t sup |u_x| should not exceed
    the larger of the initial sup and the sup attained at the two boundary
    grid points over time, up to relative slack 1e-6."""
    grads = [s.gradient() for s in states]
    initial_sup = float(np.abs(grads[0]).max())
    boundary_sup = float(max(max(abs(g[0]), abs(g[-1])) for g in grads))
    max_sup = float(max(np.abs(g).max() for g in grads))
    if initial_sup > c1_limit:
        return GradientBoundReport(
            applicable=False,
            initial_sup=initial_sup,
            boundary_sup=boundary_sup,
            max_sup=max_sup,
            passes=False,
            note=f"initial C1 norm {initial_sup:.3g} exceeds limit {c1_limit}",
        )
    allowed = max(initial_sup, boundary_sup) * (1 + 1e-6)
    return GradientBoundReport(
        applicable=True,
        initial_sup=initial_sup,
        boundary_sup=boundary_sup,
        max_sup=max_sup,
        passes=max_sup <= allowed,
    )
