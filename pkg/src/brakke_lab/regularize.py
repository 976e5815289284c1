"""Elliptic regularization: weighted-area minimization one dimension up.

A triangulated surface in R^2 x R with prescribed boundary (the initial
curve at height zero, plus vertical rays over the boundary points) is
driven to a minimizer of  sum_T area(T) * exp(-lambda * zbar(T))  by
gradient descent with line search.  Translating the minimizer downward at
speed lambda and slicing at a fixed height recovers an approximate curve
flow whose quality improves with lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .flow import FlowTrajectory, _snapshot


# Vertices whose surrounding weight e^(-lam z) is below this carry less than
# float rounding of the functional; they are held as truncation data.
FREEZE_WEIGHT = 1e-13


@dataclass(frozen=True)
class RegularizationConfig:
    lam: float
    z_max: float
    step: float | None = None  # explicit-flow time step; None = 0.04/lam^2 (CFL for graded meshes)
    stop_grad: float = 5e-2    # velocity threshold |H - lam (e_z)^perp|
    max_iter: int = 2000
    remesh_every: int = 50
    min_angle_deg: float = 15.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.z_max < 3.0 / self.lam:
            raise ValueError("z_max must cover several e-foldings (>= 3/lambda)")

    @property
    def step_size(self) -> float:
        return self.step if self.step is not None else 0.04 / self.lam**2


@dataclass
class TriMesh:
    """Triangle mesh in R^3 with pinned vertices.

    pins maps vertex index to ('initial_curve', None) for fully fixed
    vertices on the initial curve at z = 0, or ('boundary_ray', gamma_id)
    for vertices whose (x, y) sit on a boundary point and whose z slides
    in [0, z_max].  gamma holds the (x, y) of each boundary point.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    pins: dict[int, tuple[str, str | None]] = field(default_factory=dict)
    gamma: dict[str, np.ndarray] = field(default_factory=dict)
    warning: str | None = None

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.triangles.copy(),
                       dict(self.pins), dict(self.gamma), self.warning)


def triangle_geometry(vertices: np.ndarray, triangles: np.ndarray):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    n = np.cross(b - a, c - a)
    areas = 0.5 * np.linalg.norm(n, axis=1)
    return a, b, c, n, areas


def weighted_area_value(vertices: np.ndarray, triangles: np.ndarray, lam: float) -> float:
    _, _, _, _, areas = triangle_geometry(vertices, triangles)
    if np.any(areas <= 1e-14):
        raise ValueError("degenerate triangle (area <= 1e-14)")
    zbar = vertices[triangles][:, :, 2].mean(axis=1)
    return float(np.sum(areas * np.exp(-lam * zbar)))


def weighted_area(mesh: TriMesh, lam: float) -> tuple[float, np.ndarray]:
    """Value and exact per-vertex gradient of sum area * exp(-lam * zbar)."""
    a, b, c, n, areas = triangle_geometry(mesh.vertices, mesh.triangles)
    if np.any(areas <= 1e-14):
        raise ValueError("degenerate triangle (area <= 1e-14)")
    zbar = (a[:, 2] + b[:, 2] + c[:, 2]) / 3.0
    w = np.exp(-lam * zbar)
    value = float(np.sum(areas * w))
    nhat = n / (2.0 * areas)[:, None]  # n / |n|, halved cross products below
    nv = len(mesh.vertices)
    grad = np.zeros_like(mesh.vertices)
    # dA/da = ((b - c) x nhat)/2 and cyclic
    ga = 0.5 * np.cross(b - c, nhat)
    gb = 0.5 * np.cross(c - a, nhat)
    gc = 0.5 * np.cross(a - b, nhat)
    zterm = (-lam / 3.0) * areas * w
    for k, gk in enumerate((ga, gb, gc)):
        idx = mesh.triangles[:, k]
        contrib = w[:, None] * gk
        for d in range(3):
            grad[:, d] += np.bincount(idx, weights=contrib[:, d], minlength=nv)
        grad[:, 2] += np.bincount(idx, weights=zterm, minlength=nv)
    return value, grad


def _apply_pins(mesh: TriMesh, vertices: np.ndarray, z_max: float,
                reference: np.ndarray) -> None:
    """Project onto the constraint set: pins restored, z clamped to [0, z_max]."""
    np.clip(vertices[:, 2], 0.0, z_max, out=vertices[:, 2])
    for vi, (kind, ref) in mesh.pins.items():
        if kind in ("initial_curve", "top_edge"):
            vertices[vi] = reference[vi]
        elif kind == "boundary_ray":
            vertices[vi, 0] = mesh.gamma[ref][0]
            vertices[vi, 1] = mesh.gamma[ref][1]
        else:
            raise ValueError(f"unknown pin kind {kind!r}")


def _mask_gradient(mesh: TriMesh, grad: np.ndarray) -> np.ndarray:
    g = grad.copy()
    for vi, (kind, _) in mesh.pins.items():
        if kind in ("initial_curve", "top_edge"):
            g[vi] = 0.0
        elif kind == "boundary_ray":
            g[vi, 0] = 0.0
            g[vi, 1] = 0.0
    return g


def boundary_vertex_mask(mesh: TriMesh) -> np.ndarray:
    """Vertices incident to an edge owned by a single triangle."""
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for k in range(3):
            e = tuple(sorted((int(tri[k]), int(tri[(k + 1) % 3]))))
            counts[e] = counts.get(e, 0) + 1
    mask = np.zeros(len(mesh.vertices), dtype=bool)
    for (u, v), n in counts.items():
        if n == 1:
            mask[u] = True
            mask[v] = True
    return mask


def _min_angles_all(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    angs = np.full(len(triangles), np.inf)
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        cosang = np.einsum("ij,ij->i", u, v) / np.maximum(1e-300, nu * nv)
        angs = np.minimum(angs, np.arccos(np.clip(cosang, -1.0, 1.0)))
    return angs


def _min_angle(vertices: np.ndarray, tri: np.ndarray) -> float:
    return float(_min_angles_all(vertices, tri[None, :])[0])


def flip_edges(mesh: TriMesh, min_angle_deg: float = 15.0) -> int:
    """One pass of interior edge flips that improve the worse min angle.

    Only edges touching a triangle below the quality threshold are
    considered, so the pass is cheap on healthy meshes."""
    tris = mesh.triangles
    angles = _min_angles_all(mesh.vertices, tris)
    bad = np.nonzero(angles < math.radians(min_angle_deg))[0]
    if len(bad) == 0:
        return 0
    bad_set = set(int(b) for b in bad)
    edge_map: dict[tuple[int, int], list[int]] = {}
    for ti, tri in enumerate(tris):
        for k in range(3):
            e = tuple(sorted((int(tri[k]), int(tri[(k + 1) % 3]))))
            edge_map.setdefault(e, []).append(ti)
    existing = set(edge_map)
    flips = 0
    dirty: set[int] = set()
    for (u, v), owners in edge_map.items():
        if len(owners) != 2:
            continue
        t1, t2 = owners
        if (t1 not in bad_set and t2 not in bad_set) or t1 in dirty or t2 in dirty:
            continue
        p = next(int(x) for x in tris[t1] if x not in (u, v))
        q = next(int(x) for x in tris[t2] if x not in (u, v))
        if p == q or tuple(sorted((p, q))) in existing:
            continue
        # flipping a strongly bent quad rewrites the surface, not just the
        # triangulation; only treat near-planar quads as remeshable
        n1 = np.cross(mesh.vertices[tris[t1][1]] - mesh.vertices[tris[t1][0]],
                      mesh.vertices[tris[t1][2]] - mesh.vertices[tris[t1][0]])
        n2 = np.cross(mesh.vertices[tris[t2][1]] - mesh.vertices[tris[t2][0]],
                      mesh.vertices[tris[t2][2]] - mesh.vertices[tris[t2][0]])
        denom = np.linalg.norm(n1) * np.linalg.norm(n2)
        if denom <= 0 or abs(float(n1 @ n2)) / denom < 0.95:
            continue
        old = min(_min_angle(mesh.vertices, tris[t1]), _min_angle(mesh.vertices, tris[t2]))
        new1 = np.array([u, p, q])
        new2 = np.array([v, q, p])
        new = min(_min_angle(mesh.vertices, new1), _min_angle(mesh.vertices, new2))
        if new > old + 1e-9:
            tris[t1] = new1
            tris[t2] = new2
            existing.add(tuple(sorted((p, q))))
            dirty.update((t1, t2))
            flips += 1
    return flips


@dataclass(frozen=True)
class MinimizeInfo:
    iterations: int
    values: tuple[float, ...]
    grad_norm: float
    converged: bool


def _vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    _, _, _, n, _ = triangle_geometry(vertices, triangles)
    acc = np.zeros_like(vertices)
    for k in range(3):
        for d in range(3):
            acc[:, d] += np.bincount(triangles[:, k], weights=n[:, d],
                                     minlength=len(vertices))
    nrm = np.linalg.norm(acc, axis=1)
    return acc / np.maximum(nrm, 1e-300)[:, None]


def _dual_areas_and_weights(vertices: np.ndarray, triangles: np.ndarray,
                            lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Dual vertex areas and the matching average of adjacent e^(-lam zbar)."""
    _, _, _, _, areas = triangle_geometry(vertices, triangles)
    zbar = vertices[triangles][:, :, 2].mean(axis=1)
    wtri = np.exp(-lam * zbar)
    nv = len(vertices)
    dual = np.zeros(nv)
    wdual = np.zeros(nv)
    for k in range(3):
        dual += np.bincount(triangles[:, k], weights=areas / 3.0, minlength=nv)
        wdual += np.bincount(triangles[:, k], weights=wtri * areas / 3.0, minlength=nv)
    wbar = np.where(dual > 0, wdual / np.maximum(dual, 1e-300), 0.0)
    return dual, wbar


def minimize(initial: TriMesh, cfg: RegularizationConfig) -> tuple[TriMesh, MinimizeInfo]:
    """Projected descent with backtracking line search.

    The raw gradient is preconditioned by the Ilmanen weight exp(-lam z)
    and the dual vertex area, so the search direction is the shape-gradient
    velocity |H - lam (e_z)^perp| at every height and the descent does not
    stall (or slosh) in regions the exponential weight barely sees.
    Vertices whose weight falls below the functional's float resolution are
    frozen: the energy does not constrain them, so they keep their initial
    (truncation-data) positions.  stop_grad is a velocity threshold.
    """
    mesh = initial.copy()
    if len(mesh.vertices) == 0 or len(mesh.triangles) == 0:
        return mesh, MinimizeInfo(iterations=0, values=(0.0,), grad_norm=0.0,
                                  converged=True)
    reference = initial.vertices.copy()
    _apply_pins(mesh, mesh.vertices, cfg.z_max, reference)
    step = cfg.step_size
    value, grad = weighted_area(mesh, cfg.lam)
    values = [value]
    gnorm = math.inf
    it = 0
    ray_pins = [vi for vi, (kind, _) in mesh.pins.items() if kind == "boundary_ray"]
    for it in range(1, cfg.max_iter + 1):
        g = _mask_gradient(mesh, grad)
        dual, wbar = _dual_areas_and_weights(mesh.vertices, mesh.triangles, cfg.lam)
        live = wbar > FREEZE_WEIGHT
        denom = np.maximum(wbar * dual, 1e-300)
        d = np.where(live[:, None], g / denom[:, None], 0.0)
        if ray_pins:
            # a ray vertex slides along e_z; only the component of that slide
            # normal to the surface changes the shape.  Scaling by the squared
            # normal alignment suppresses pure-reparametrization drift (which
            # otherwise chases quadrature noise and bunches the ray).
            normals = _vertex_normals(mesh.vertices, mesh.triangles)
            for vi in ray_pins:
                d[vi, 2] *= float(normals[vi, 2] ** 2)
        gnorm = float(np.abs(d).max())
        if gnorm < cfg.stop_grad:
            break
        accepted = False
        for _ in range(40):
            cand = mesh.vertices - step * d
            _apply_pins(mesh, cand, cfg.z_max, reference)
            try:
                v_new = weighted_area_value(cand, mesh.triangles, cfg.lam)
            except ValueError:
                step *= 0.5
                continue
            if v_new < value:
                mesh.vertices = cand
                value, grad = weighted_area(mesh, cfg.lam)
                values.append(value)
                accepted = True
                # growth is capped at the configured (CFL-scale) step: larger
                # steps destabilize the explicit flow and can tunnel into
                # under-resolved stretched states the centroid quadrature
                # misprices
                step = min(step * 1.3, cfg.step_size)
                break
            step *= 0.5
        if not accepted:
            mesh.warning = f"line search stalled at iteration {it}"
            break
        if it % cfg.remesh_every == 0:
            old_tris = mesh.triangles.copy()
            if flip_edges(mesh, cfg.min_angle_deg):
                v_new, g_new = weighted_area(mesh, cfg.lam)
                if v_new <= value:
                    value, grad = v_new, g_new
                    values.append(value)
                else:
                    mesh.triangles = old_tris
    converged = gnorm < cfg.stop_grad
    if not converged and mesh.warning is None:
        mesh.warning = f"gradient norm {gnorm:.3e} after {it} iterations"
    return mesh, MinimizeInfo(iterations=it, values=tuple(values),
                              grad_norm=gnorm, converged=converged)


# ---------------------------------------------------------------------------
# discrete first-variation residual of the weighted functional


def translator_residual(mesh: TriMesh, lam: float,
                        z_clamp: float | None = None) -> float:
    """Mass-weighted RMS of |H - lam * (e_z)^perp| over free interior vertices.

    A critical point of the weighted area satisfies H = lam * (e_z)^perp
    (perp = projection onto the surface normal).  H is recovered from the
    unweighted area gradient divided by the dual vertex area.  Pinned
    vertices, free mesh-boundary vertices (where the discrete H estimate is
    a boundary tension, not a curvature), and vertices pressed against the
    z clamp are excluded.
    """
    plain = TriMesh(mesh.vertices, mesh.triangles, {}, {})
    _, area_grad = weighted_area(plain, 0.0)
    _, _, _, n, areas = triangle_geometry(mesh.vertices, mesh.triangles)
    dual = np.zeros(len(mesh.vertices))
    normal_acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(dual, mesh.triangles[:, k], areas / 3.0)
        np.add.at(normal_acc, mesh.triangles[:, k], n)
    on_boundary = boundary_vertex_mask(mesh)
    nrm = np.linalg.norm(normal_acc, axis=1)
    total = 0.0
    wsum = 0.0
    ez = np.array([0.0, 0.0, 1.0])
    for vi in range(len(mesh.vertices)):
        if vi in mesh.pins or on_boundary[vi] or dual[vi] <= 0 or nrm[vi] == 0:
            continue
        if z_clamp is not None and mesh.vertices[vi, 2] >= z_clamp - 1e-9:
            continue
        nhat = normal_acc[vi] / nrm[vi]
        Hvec = -area_grad[vi] / dual[vi]
        target = lam * float(ez @ nhat) * nhat
        total += dual[vi] * float(np.sum((Hvec - target) ** 2))
        wsum += dual[vi]
    return math.sqrt(total / wsum) if wsum > 0 else 0.0


# ---------------------------------------------------------------------------
# slab mass and slicing


def _clip_polygon_halfspace(poly: list[np.ndarray], level: float, keep_below: bool):
    out: list[np.ndarray] = []
    for i, p in enumerate(poly):
        q = poly[(i + 1) % len(poly)]
        pin = (p[2] <= level) if keep_below else (p[2] >= level)
        qin = (q[2] <= level) if keep_below else (q[2] >= level)
        if pin:
            out.append(p)
        if pin != qin:
            s = (level - p[2]) / (q[2] - p[2])
            out.append(p + s * (q - p))
    return out


def _polygon_area(poly: list[np.ndarray]) -> float:
    if len(poly) < 3:
        return 0.0
    acc = np.zeros(3)
    for i in range(1, len(poly) - 1):
        acc += np.cross(poly[i] - poly[0], poly[i + 1] - poly[0])
    return 0.5 * float(np.linalg.norm(acc))


def slab_mass(mesh: TriMesh, a: float, b: float) -> float:
    """Area of the mesh between heights a and a + b (exact triangle clipping)."""
    total = 0.0
    V, T = mesh.vertices, mesh.triangles
    zmin = np.min(V[T][:, :, 2], axis=1)
    zmax = np.max(V[T][:, :, 2], axis=1)
    for ti in np.nonzero((zmax > a) & (zmin < a + b))[0]:
        poly = [V[T[ti, k]].astype(float) for k in range(3)]
        poly = _clip_polygon_halfspace(poly, a, keep_below=False)
        if poly:
            poly = _clip_polygon_halfspace(poly, a + b, keep_below=True)
        total += _polygon_area(poly)
    return total


def _chain_segments(segments: list[tuple[np.ndarray, np.ndarray]], tol: float):
    """Greedy chaining of 2D segments into polylines by endpoint matching."""
    segs = [(np.asarray(p), np.asarray(q)) for p, q in segments
            if np.linalg.norm(p - q) > tol]
    used = [False] * len(segs)
    chains = []
    for i in range(len(segs)):
        if used[i]:
            continue
        used[i] = True
        chain = [segs[i][0], segs[i][1]]
        grew = True
        while grew:
            grew = False
            for j in range(len(segs)):
                if used[j]:
                    continue
                p, q = segs[j]
                if np.linalg.norm(chain[-1] - p) <= tol:
                    chain.append(q)
                elif np.linalg.norm(chain[-1] - q) <= tol:
                    chain.append(p)
                elif np.linalg.norm(chain[0] - p) <= tol:
                    chain.insert(0, q)
                elif np.linalg.norm(chain[0] - q) <= tol:
                    chain.insert(0, p)
                else:
                    continue
                used[j] = True
                grew = True
        chains.append(chain)
    return chains


def slice_at_height(mesh: TriMesh, zc: float, *, match_tol: float = 1e-9) -> geometry.Network:
    """Cross-section z = zc as a planar network; endpoints near a boundary
    ray are pinned to the corresponding boundary point."""
    V, T = mesh.vertices, mesh.triangles
    segments = []
    for tri in T:
        p = V[tri]
        below = p[:, 2] < zc
        if below.all() or (~below).all():
            continue
        pts = []
        for k in range(3):
            a_, b_ = p[k], p[(k + 1) % 3]
            if (a_[2] < zc) != (b_[2] < zc):
                s = (zc - a_[2]) / (b_[2] - a_[2])
                pts.append(a_[:2] + s * (b_[:2] - a_[:2]))
        if len(pts) == 2:
            segments.append((pts[0], pts[1]))
    scale = max(1.0, float(np.abs(V[:, :2]).max()))
    chains = _chain_segments(segments, tol=1e-7 * scale)
    curves = []
    for chain in chains:
        pts = [chain[0]]
        for p in chain[1:]:
            if np.linalg.norm(p - pts[-1]) > 1e-7 * scale:
                pts.append(p)
        if len(pts) < 2:
            continue
        arr = np.array(pts)
        start_c = end_c = geometry.FREE
        for gid, gxy in mesh.gamma.items():
            if np.linalg.norm(arr[0] - gxy) <= 1e-6 * scale:
                arr[0] = gxy
                start_c = geometry.fixed(gid)
            if np.linalg.norm(arr[-1] - gxy) <= 1e-6 * scale:
                arr[-1] = gxy
                end_c = geometry.fixed(gid)
        curves.append(geometry.DiscreteCurve(arr, 1, start_c, end_c))
    return geometry.Network(
        curves=tuple(curves),
        boundary_points={k: v.copy() for k, v in mesh.gamma.items()},
    )


def slice_flow(mesh: TriMesh, lam: float, times, *, z0: float | None = None,
               z_max: float | None = None) -> FlowTrajectory:
    """Translate the mesh down at speed lam and slice at height z0.

    Slicing at z0 after translating by lam*t equals slicing the static mesh
    at z0 + lam*t; times whose slice height leaves the truncated domain are
    dropped and flagged in the mesh warning.
    """
    if z0 is None:
        z0 = 1.0 / lam
    if z_max is None:
        z_max = float(mesh.vertices[:, 2].max())
    snaps = []
    truncated = False
    for t in times:
        zc = z0 + lam * float(t)
        if zc > z_max - 1e-12:
            truncated = True
            continue
        net = slice_at_height(mesh, zc)
        net = geometry.Network(curves=net.curves, boundary_points=net.boundary_points,
                               junctions=net.junctions, time=float(t))
        snaps.append(_snapshot(net, float(t)))
    if truncated:
        mesh.warning = "slice heights beyond z_max were dropped"
    return FlowTrajectory(snapshots=tuple(snaps))


# ---------------------------------------------------------------------------
# mesh builders


def sheet_mesh(a_xy, b_xy, z_max: float, n_s: int, n_z: int,
               ids: tuple[str, str] = ("A", "B")) -> TriMesh:
    """Vertical strip over the segment a-b: bottom edge is the initial
    curve, the two vertical sides are boundary rays."""
    a_xy = np.asarray(a_xy, dtype=float)
    b_xy = np.asarray(b_xy, dtype=float)
    ss = np.linspace(0.0, 1.0, n_s + 1)
    zs = np.linspace(0.0, z_max, n_z + 1)
    verts = []
    for z in zs:
        for s in ss:
            xy = a_xy + s * (b_xy - a_xy)
            verts.append([xy[0], xy[1], z])
    verts = np.array(verts)
    tris = []
    w = n_s + 1
    for j in range(n_z):
        for i in range(n_s):
            v00 = j * w + i
            v10 = v00 + 1
            v01 = v00 + w
            v11 = v01 + 1
            tris.append([v00, v10, v11])
            tris.append([v00, v11, v01])
    pins: dict[int, tuple[str, str | None]] = {}
    for i in range(w):
        pins[i] = ("initial_curve", None)
    for j in range(1, n_z + 1):
        pins[j * w] = ("boundary_ray", ids[0])
        pins[j * w + n_s] = ("boundary_ray", ids[1])
    # the top edge is truncation data (the exact surface continues upward);
    # holding it costs only O(exp(-lam z_max)) in the functional
    for i in range(1, n_s):
        pins[n_z * w + i] = ("top_edge", None)
    return TriMesh(verts, np.array(tris, dtype=int), pins,
                   gamma={ids[0]: a_xy.copy(), ids[1]: b_xy.copy()})


def _dome_profile(r: np.ndarray, lam: float, z_max: float) -> np.ndarray:
    return np.minimum(lam * (1.0 - r * r) / 2.0, z_max)


def _graded_z_levels(lam: float, z_max: float, n_coarse: int) -> np.ndarray:
    """Ring heights resolving the exponential weight: lam * dz <= 0.4 while
    the weight is numerically alive, coarser steps beyond."""
    z_live = min(z_max, -math.log(FREEZE_WEIGHT * 1e-3) / lam)
    dz_fine = 0.4 / lam
    fine = np.arange(0.0, z_live, dz_fine)
    if z_live >= z_max - 1e-12:
        return np.append(fine, z_max)
    coarse = np.linspace(z_live, z_max, max(4, n_coarse) + 1)
    return np.concatenate([fine, coarse])


def disk_mesh(radius: float, lam: float, z_max: float, n_theta: int,
              n_rings: int = 160, *, dome_init: bool = True) -> TriMesh:
    """Disk mesh over the circle of the given radius, rim pinned at z = 0.

    With dome_init the interior starts on the translator-sheet profile
    z(r) = min(lam (1 - r^2)/2, z_max); ring heights are graded so the
    exponential weight is resolved where it matters (n_rings controls the
    coarse zone).  Otherwise the disk starts flat with n_rings rings.
    """
    if dome_init:
        z_levels = _graded_z_levels(lam, z_max, n_rings)
        radii = radius * np.sqrt(np.maximum(0.0, 1.0 - 2.0 * z_levels / lam))
        r_wall_end = radii[-1]
        if r_wall_end >= 1e-9 * radius:
            # flat lid closing the truncated dome
            n_lid = max(4, int(round(r_wall_end / radius * n_theta / 4)))
            r_lid = np.linspace(r_wall_end, 0.0, n_lid + 1)[1:]
            radii = np.concatenate([radii, r_lid])
    else:
        radii = np.linspace(radius, 0.0, n_rings + 1)[:-1]
    thetas = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    verts = []
    for r in radii[:-1] if radii[-1] == 0.0 else radii:
        for th in thetas:
            verts.append([r * math.cos(th), r * math.sin(th), 0.0])
    ring_radii = radii[:-1] if radii[-1] == 0.0 else radii
    center_idx = len(verts)
    verts.append([0.0, 0.0, 0.0])
    verts = np.array(verts)
    if dome_init:
        rr = np.linalg.norm(verts[:, :2], axis=1) / radius
        verts[:, 2] = _dome_profile(rr, lam, z_max)
        verts[center_idx, 2] = z_max
    tris = []
    n_r = len(ring_radii)
    for j in range(n_r - 1):
        for i in range(n_theta):
            i2 = (i + 1) % n_theta
            v00 = j * n_theta + i
            v01 = j * n_theta + i2
            v10 = (j + 1) * n_theta + i
            v11 = (j + 1) * n_theta + i2
            tris.append([v00, v01, v11])
            tris.append([v00, v11, v10])
    last = (n_r - 1) * n_theta
    for i in range(n_theta):
        tris.append([last + i, last + (i + 1) % n_theta, center_idx])
    pins = {i: ("initial_curve", None) for i in range(n_theta)}
    return TriMesh(verts, np.array(tris, dtype=int), pins, gamma={})


# ---------------------------------------------------------------------------
# OFF-style mesh I/O


def save_off(mesh: TriMesh, path) -> None:
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{len(mesh.vertices)} {len(mesh.triangles)} 0\n")
        for v in mesh.vertices:
            f.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            f.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def load_off(path) -> TriMesh:
    with open(path) as f:
        tokens = f.read().split()
    if tokens[0] != "OFF":
        raise ValueError("not an OFF file")
    nv, nt = int(tokens[1]), int(tokens[2])
    base = 4
    verts = np.array(tokens[base:base + 3 * nv], dtype=float).reshape(nv, 3)
    tris = []
    pos = base + 3 * nv
    for _ in range(nt):
        cnt = int(tokens[pos])
        if cnt != 3:
            raise ValueError("only triangle faces supported")
        tris.append([int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])])
        pos += cnt + 1
    return TriMesh(verts, np.array(tris, dtype=int))
