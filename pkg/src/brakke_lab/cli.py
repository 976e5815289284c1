"""Experiment runner: TOML configs in, reports and plot-ready CSV out.

Exit codes: 0 all enabled checks pass, 1 a check failed (reports are still
written), 2 usage or config error.  The default output root is
$BRAKKE_LAB_OUT or ./runs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, brakke_check, flow, geometry, monotonicity, regularize, varifold

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2

KINDS = (
    "network_flow", "graph_flow", "density", "brakke_audit",
    "regularization", "avoidance", "wedge", "trig_table",
)


class ConfigError(Exception):
    pass


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            cfg = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"bad TOML in {path}: {e}") from e
    if "kind" not in cfg:
        raise ConfigError(f"{path}: missing 'kind'")
    if cfg["kind"] not in KINDS:
        raise ConfigError(f"{path}: unknown kind {cfg['kind']!r}")
    return cfg


def _resolve_path(base_dir: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(base_dir, p)


def _load_geometry(cfg: dict, base_dir: str, key: str = "geometry") -> geometry.Network:
    if key not in cfg:
        raise ConfigError(f"missing '{key}' path")
    path = _resolve_path(base_dir, cfg[key])
    if not os.path.exists(path):
        raise ConfigError(f"geometry file not found: {path}")
    return geometry.load_network(path)


def _flow_params(cfg: dict) -> flow.FlowParams:
    fp = cfg.get("flow", {})
    try:
        return flow.FlowParams(
            target_h=float(fp.get("target_h", 0.02)),
            t_end=float(fp.get("t_end", 0.5)),
            dt_safety=float(fp.get("dt_safety", 0.5)),
            scheme=fp.get("scheme", "explicit"),
            resample_every=int(fp.get("resample_every", 10)),
            snapshot_every=int(fp.get("snapshot_every", 10)),
            vanish_length=fp.get("vanish_length"),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [flow] block: {e}") from e


def _kernel_config(cfg: dict) -> monotonicity.KernelConfig:
    kc = cfg.get("kernel", {})
    return monotonicity.KernelConfig(
        m=int(kc.get("m", 1)),
        cutoff_inner=float(kc.get("cutoff_inner", 0.5)),
        cutoff_outer=float(kc.get("cutoff_outer", 1.0)),
        cutoff_enabled=bool(kc.get("cutoff_enabled", True)),
    )


def _write_manifest(out_dir: str, cfg: dict, path: str, seed: int) -> None:
    manifest = {
        "config_path": os.path.abspath(path),
        "resolved_config": cfg,
        "seed": seed,
        "code_version": __version__,
        "numpy_version": np.__version__,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def _write_gnuplot_stub(out_dir: str, csv_name: str, columns: str) -> None:
    with open(os.path.join(out_dir, "plots.gp"), "w") as f:
        f.write("set datafile separator ','\nset key autotitle columnhead\n")
        f.write(f"plot '{csv_name}' using {columns} with lines\n")


def _check(results: list, name: str, ok: bool, detail: str) -> None:
    results.append({"check": name, "ok": bool(ok), "detail": detail})


# ---------------------------------------------------------------------------
# experiment kinds


def _run_network_flow(cfg, base_dir, out_dir, seed, results):
    net = _load_geometry(cfg, base_dir)
    params = _flow_params(cfg)
    traj = flow.run(net, params)
    flow.export_trajectory(traj, out_dir, snapshots=cfg.get("save_snapshots", True))
    _write_gnuplot_stub(out_dir, "trajectory.csv", "1:2")
    checks = cfg.get("checks", {})
    event_kinds = [e.kind for e in traj.events]
    if "expect_event" in checks:
        want = checks["expect_event"]
        _check(results, "expect_event", want in event_kinds,
               f"wanted {want}, got {event_kinds}")
    if "forbid_event" in checks:
        bad = checks["forbid_event"]
        _check(results, "forbid_event", bad not in event_kinds,
               f"forbidden {bad}, got {event_kinds}")
    if "final_mass" in checks:
        want = float(checks["final_mass"])
        tol = float(checks.get("final_mass_tol", 1e-3))
        got = traj.snapshots[-1].total_mass
        _check(results, "final_mass", abs(got - want) <= tol,
               f"mass {got:.6f} vs {want} (tol {tol})")
    if checks.get("junction_balance", False):
        # snapshots after the first: the initial data need not be balanced
        worst = 0.0
        for s in traj.snapshots[1:]:
            for v in varifold.junction_imbalance(s.network).values():
                worst = max(worst, float(np.linalg.norm(v)))
        _check(results, "junction_balance", worst < 1e-9, f"worst imbalance {worst:.2e}")
    if checks.get("standard_state") is not None:
        want = bool(checks["standard_state"])
        gamma_ids = set(traj.snapshots[0].network.boundary_points)
        verdicts = [varifold.is_standard_state(s.network, gamma_ids).is_standard
                    for s in traj.snapshots]
        ok = all(v == want for v in verdicts)
        _check(results, "standard_state", ok, f"want {want} at every snapshot")
    return traj


def _run_graph_flow(cfg, base_dir, out_dir, seed, results):
    g = cfg.get("graph", {})
    x0, x1 = float(g.get("x0", -1.0)), float(g.get("x1", 1.0))
    n = int(g.get("grid", 401))
    profile = g.get("profile", "zero")
    x = np.linspace(x0, x1, n)
    if profile == "zero":
        u0 = np.zeros_like(x)
        bc = (0.0, 0.0)
    elif profile == "bump":
        amp = float(g.get("amplitude", 0.02))
        u0 = amp * np.sin(np.pi * (x - x0) / (x1 - x0)) ** 2
        bc = (0.0, 0.0)
    elif profile == "grim_reaper":
        u0 = -np.log(np.cos(x))
        bc = (lambda t: float(t - math.log(math.cos(x0))),
              lambda t: float(t - math.log(math.cos(x1))))
    else:
        raise ConfigError(f"unknown graph profile {profile!r}")
    state = flow.GraphState(x=x, u=u0, bc=bc)
    states = flow.run_graph(state, float(g.get("t_end", 0.1)))
    with open(os.path.join(out_dir, "graph.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x"] + [f"u_t{s.t:.6g}" for s in states])
        for i in range(len(x)):
            w.writerow([f"{x[i]:.17g}"] + [f"{s.u[i]:.17g}" for s in states])
    _write_gnuplot_stub(out_dir, "graph.csv", "1:2")
    checks = cfg.get("checks", {})
    if checks.get("gradient_bound", False):
        rep = flow.gradient_bound_check(states)
        _check(results, "gradient_bound", (not rep.applicable) or rep.passes,
               f"applicable={rep.applicable} max={rep.max_sup:.4g} "
               f"initial={rep.initial_sup:.4g}")
    if "translation_residual" in checks:
        tol = float(checks["translation_residual"])
        resid = float(np.abs((states[-1].u - states[-1].t) - states[0].u).max())
        _check(results, "translation_residual", resid <= tol, f"residual {resid:.2e}")
    return states


def _run_density(cfg, base_dir, out_dir, seed, results):
    kcfg = _kernel_config(cfg)
    d = cfg.get("density", {})
    net = _load_geometry(cfg, base_dir)
    t_lo = float(d.get("t_start", -0.25))
    t_hi = float(d.get("t_stop", -0.001))
    n = int(d.get("num_times", 25))
    times = -np.geomspace(-t_lo, -t_hi, n)
    traj = flow.static_trajectory(net, times)
    center = np.asarray(d.get("center", [0.0, 0.0]), dtype=float)
    density, series = monotonicity.gaussian_density(traj, center, 0.0, kcfg)
    series.to_csv(os.path.join(out_dir, "monotone_series.csv"))
    _write_gnuplot_stub(out_dir, "monotone_series.csv", "1:2")
    with open(os.path.join(out_dir, "density.json"), "w") as f:
        json.dump({"density": density, "C": series.C, "K": series.K}, f, indent=1)
    checks = cfg.get("checks", {})
    if "expected_density" in checks:
        want = float(checks["expected_density"])
        tol = float(checks.get("density_tol", 1e-3))
        _check(results, "density", abs(density - want) <= tol,
               f"density {density:.6f} vs {want} (tol {tol})")
    if "monotone_tol" in checks:
        ok, uptick = monotonicity.monotonicity_check(series, float(checks["monotone_tol"]))
        _check(results, "monotone", ok, f"max uptick {uptick:.2e}")
    return density


def _run_brakke_audit(cfg, base_dir, out_dir, seed, results):
    net = _load_geometry(cfg, base_dir)
    params = _flow_params(cfg)
    traj = flow.run(net, params)
    a = float(cfg.get("audit", {}).get("a", traj.snapshots[0].time))
    b = float(cfg.get("audit", {}).get("b", traj.snapshots[-1].time))
    moving = bool(cfg.get("audit", {}).get("moving", False))
    ub = cfg.get("test_functions", [])
    if not ub:
        raise ConfigError("brakke_audit needs [[test_functions]]")
    all_pass = True
    reports = []
    us = []
    for i, spec_tf in enumerate(ub):
        u = brakke_check.radial_bump(
            spec_tf.get("center", [0.0, 0.0]),
            float(spec_tf["r_inner"]), float(spec_tf["r_outer"]),
            name=spec_tf.get("name", f"u{i}"),
        )
        if spec_tf.get("time_rate"):
            u = brakke_check.scaled_in_time(u, float(spec_tf["time_rate"]))
        us.append(u)
        rep = brakke_check.brakke_inequality(traj, u, a, b, moving=moving, seed=seed)
        reports.append((u.name, rep))
        all_pass &= rep.verdict == "pass"
        brakke_check.dump_report(rep, os.path.join(out_dir, f"inequality_{i}.json"))
    _check(results, "brakke_inequality", all_pass,
           "; ".join(f"{n}: {r.residual:+.2e} {r.verdict}" for n, r in reports))
    if cfg.get("audit", {}).get("negative_control", False):
        # flip the term with the largest magnitude so the control has teeth
        if moving:
            key, flip = "gamma_dot_term", "gamma_dot"
        else:
            key, flip = "h_grad_u", "h_grad"
        i_best = max(range(len(reports)),
                     key=lambda i: abs(reports[i][1].components.get(key, 0.0)))
        repn = brakke_check.brakke_inequality(
            traj, us[i_best], a, b, moving=moving, seed=seed, sign_flip=flip)
        _check(results, "negative_control", repn.verdict == "fail",
               f"{us[i_best].name} flipped-{flip} residual "
               f"{repn.residual:+.2e} ({repn.verdict})")
    area = cfg.get("area_bound")
    if area:
        rep = brakke_check.area_bound_check(
            traj, np.asarray(area.get("center", [0.0, 0.0]), float),
            float(area.get("radius", 1.0)))
        brakke_check.dump_report(rep, os.path.join(out_dir, "area_bound.json"))
        _check(results, "area_bound", rep.passes,
               f"worst violation {rep.worst_violation:+.2e} (tol {rep.tol:.2e})")
    return reports


def _run_regularization(cfg, base_dir, out_dir, seed, results):
    r = cfg.get("regularization", {})
    lam = float(r.get("lam", 10.0))
    shape = r.get("shape", "circle")
    if shape == "circle":
        z_max = float(r.get("z_max", lam / 2.0))
        mesh0 = regularize.disk_mesh(float(r.get("radius", 1.0)), lam, z_max,
                                     n_theta=int(r.get("n_theta", 96)))
        m0_len = 2.0 * math.pi * float(r.get("radius", 1.0))
    elif shape == "segment":
        z_max = float(r.get("z_max", 4.0 / lam))
        a_xy = r.get("a", [0.0, 0.0])
        b_xy = r.get("b", [1.0, 0.0])
        mesh0 = regularize.sheet_mesh(a_xy, b_xy, z_max,
                                      n_s=int(r.get("n_s", 40)),
                                      n_z=int(r.get("n_z", 80)))
        m0_len = float(np.linalg.norm(np.asarray(b_xy) - np.asarray(a_xy)))
    else:
        raise ConfigError(f"unknown regularization shape {shape!r}")
    rcfg = regularize.RegularizationConfig(
        lam=lam, z_max=z_max,
        max_iter=int(r.get("max_iter", 400)),
        stop_grad=float(r.get("stop_grad", 5e-2)),
    )
    mesh, info = regularize.minimize(mesh0, rcfg)
    regularize.save_off(mesh, os.path.join(out_dir, "minimizer.off"))
    checks = cfg.get("checks", {})
    _check(results, "descent", all(b_ <= a_ + 1e-15 for a_, b_ in
                                   zip(info.values, info.values[1:])),
           f"{info.iterations} iterations, final value {info.values[-1]:.6g}")
    if "slab_tol" in checks:
        tol = float(checks["slab_tol"])
        worst = -math.inf
        for a_ in np.linspace(0.0, z_max * 0.95, 8):
            for b_ in (0.05 * z_max, 0.2 * z_max, 0.5 * z_max):
                worst = max(worst, regularize.slab_mass(mesh, a_, b_)
                            - (b_ + 1.0 / lam) * m0_len - tol)
        _check(results, "slab_bound", worst <= 0, f"worst excess {worst:+.3e}")
    times = r.get("slice_times", [0.0, 0.1, 0.2])
    traj = regularize.slice_flow(mesh, lam, [float(t) for t in times])
    for i, s in enumerate(traj.snapshots):
        geometry.save_network(s.network, os.path.join(out_dir, f"slice_{i}.json"))
    if checks.get("slices_standard", False):
        ok = True
        for s in traj.snapshots:
            rep = varifold.is_standard_state(s.network, set(mesh.gamma))
            ok &= rep.is_standard
        _check(results, "slices_standard", ok, "mod-2 boundary equals Gamma on every slice")
    if "translator_residual" in checks:
        resid = regularize.translator_residual(mesh, lam, z_clamp=z_max)
        tol = float(checks["translator_residual"])
        _check(results, "translator_residual", resid <= tol, f"residual {resid:.3e}")
    return mesh


def _run_avoidance(cfg, base_dir, out_dir, seed, results):
    net = _load_geometry(cfg, base_dir)
    barrier_net = _load_geometry(cfg, base_dir, key="barrier_geometry")
    params = _flow_params(cfg)
    traj = flow.run(net, params)
    barrier = flow.run(barrier_net, params)
    rep = brakke_check.avoidance_check(traj, barrier)
    brakke_check.dump_report(rep, os.path.join(out_dir, "avoidance.json"))
    with open(os.path.join(out_dir, "gap.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time", "distance"])
        for t, dd in zip(rep.times, rep.distances):
            w.writerow([f"{t:.17g}", f"{dd:.17g}"])
    _write_gnuplot_stub(out_dir, "gap.csv", "1:2")
    _check(results, "avoidance", rep.passes,
           f"min distance {min(rep.distances):.4f} (delta {rep.delta:.4f})")
    checks = cfg.get("checks", {})
    if checks.get("concentric_exact", False):
        tol = float(checks.get("gap_tol", 1e-2))
        r_in = float(checks.get("r_inner", 1.0))
        r_out = float(checks.get("r_outer", 2.0))
        worst = 0.0
        for t, dd in zip(rep.times, rep.distances):
            if 2.0 * t < r_in ** 2 - (4.0 * params.target_h) ** 2:
                exact = math.sqrt(r_out**2 - 2*t) - math.sqrt(r_in**2 - 2*t)
                worst = max(worst, abs(dd - exact))
        _check(results, "concentric_exact", worst <= tol, f"worst gap error {worst:.2e}")
    return rep


def _run_wedge(cfg, base_dir, out_dir, seed, results):
    net = _load_geometry(cfg, base_dir)
    v = varifold.to_varifold(net)
    w = cfg.get("wedge", {})
    res = monotonicity.wedge_test(v, np.asarray(w.get("edge_point", [0.0, 0.0]), float))
    out = {
        "contained": res.contained,
        "opening": res.opening,
        "rays": len(res.decomposition) if res.decomposition else 0,
        "multiplicities": [r.multiplicity for r in res.decomposition] if res.decomposition else [],
        "nu_norm": float(np.linalg.norm(res.nu)) if res.nu is not None else None,
        "non_standard_reasons": list(res.non_standard_reasons),
    }
    with open(os.path.join(out_dir, "wedge.json"), "w") as f:
        json.dump(out, f, indent=1)
    checks = cfg.get("checks", {})
    if "contained" in checks:
        _check(results, "contained", res.contained == bool(checks["contained"]),
               f"contained={res.contained} opening={res.opening:.4f}")
    if "rays" in checks:
        got = len(res.decomposition) if res.decomposition else 0
        _check(results, "rays", got == int(checks["rays"]), f"{got} rays")
    if checks.get("expect_non_standard", False):
        _check(results, "non_standard", len(res.non_standard_reasons) > 0,
               "; ".join(res.non_standard_reasons))
    return res


def _run_trig_table(cfg, base_dir, out_dir, seed, results):
    t = cfg.get("trig", {})
    ks = [int(k) for k in t.get("k", [1, 2, 3, 4, 5])]
    thetas = [float(x) for x in t.get("theta", [0.0, math.pi/8, math.pi/4, 3*math.pi/8])]
    grid = int(t.get("grid", 16))
    rows = []
    worst_under = 0.0
    worst_sharp = 0.0
    for k in ks:
        for th in thetas:
            bound = varifold.trig_bound(k, th)
            brute = varifold.trig_min_bruteforce(k, th, grid=grid)
            res = 2.0 * k * (th / max(1, grid - 1)) if th > 0 else 1e-12
            worst_under = max(worst_under, bound - brute - res)
            worst_sharp = max(worst_sharp, brute - bound - res)
            rows.append((k, th, bound, brute))
    with open(os.path.join(out_dir, "trig_table.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k", "theta", "bound", "bruteforce_min"])
        for row in rows:
            w.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}"])
    _write_gnuplot_stub(out_dir, "trig_table.csv", "2:3")
    _check(results, "no_undercut", worst_under <= 0.0, f"worst undercut excess {worst_under:+.2e}")
    _check(results, "sharpness", worst_sharp <= 0.0, f"worst sharpness excess {worst_sharp:+.2e}")
    return rows


_RUNNERS = {
    "network_flow": _run_network_flow,
    "graph_flow": _run_graph_flow,
    "density": _run_density,
    "brakke_audit": _run_brakke_audit,
    "regularization": _run_regularization,
    "avoidance": _run_avoidance,
    "wedge": _run_wedge,
    "trig_table": _run_trig_table,
}


def default_out_root() -> str:
    return os.environ.get("BRAKKE_LAB_OUT", os.path.join(os.getcwd(), "runs"))


def run_experiment(config_path: str, out_dir: str | None = None,
                   seed: int | None = None) -> int:
    """Execute one experiment config; returns the exit code."""
    try:
        cfg = _load_config(config_path)
        base_dir = os.path.dirname(os.path.abspath(config_path))
        name = cfg.get("name", os.path.splitext(os.path.basename(config_path))[0])
        if out_dir is None:
            out_dir = os.path.join(default_out_root(), name)
        os.makedirs(out_dir, exist_ok=True)
        if seed is None:
            seed = int(cfg.get("seed", 0))
        results: list[dict] = []
        _write_manifest(out_dir, cfg, config_path, seed)
        _RUNNERS[cfg["kind"]](cfg, base_dir, out_dir, seed, results)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    with open(os.path.join(out_dir, "checks.json"), "w") as f:
        json.dump(results, f, indent=1)
    for r in results:
        status = "PASS" if r["ok"] else "FAIL"
        print(f"[{status}] {name}: {r['check']} - {r['detail']}")
    return EXIT_OK if all(r["ok"] for r in results) else EXIT_CHECK_FAILED


def verify_all(suite_path: str, out_root: str | None = None,
               workers: int = 1) -> int:
    """Run every experiment in a suite; aggregate a summary table."""
    try:
        with open(suite_path, "rb") as f:
            suite = tomllib.load(f)
    except FileNotFoundError:
        print(f"suite not found: {suite_path}", file=sys.stderr)
        return EXIT_CONFIG
    except tomllib.TOMLDecodeError as e:
        print(f"bad suite TOML: {e}", file=sys.stderr)
        return EXIT_CONFIG
    base_dir = os.path.dirname(os.path.abspath(suite_path))
    entries = suite.get("experiment", [])
    if out_root is None:
        out_root = default_out_root()
    jobs = []
    for ent in entries:
        cpath = _resolve_path(base_dir, ent["config"])
        name = ent.get("name", os.path.splitext(os.path.basename(cpath))[0])
        jobs.append((name, cpath, os.path.join(out_root, name)))
    codes = {}
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(run_experiment, c, o): n for n, c, o in jobs}
            for fut, n in futs.items():
                codes[n] = fut.result()
    else:
        for n, c, o in jobs:
            codes[n] = run_experiment(c, o)
    rows = []
    for n, c, o in jobs:
        checks_file = os.path.join(o, "checks.json")
        detail = []
        if os.path.exists(checks_file):
            with open(checks_file) as f:
                detail = json.load(f)
        rows.append({
            "name": n, "exit": codes[n],
            "passed": sum(1 for d in detail if d["ok"]),
            "failed": sum(1 for d in detail if not d["ok"]),
        })
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "summary.json"), "w") as f:
        json.dump(rows, f, indent=1)
    if rows:
        wname = max(len(r["name"]) for r in rows)
        print(f"{'experiment'.ljust(wname)}  exit  passed  failed")
        for r in rows:
            print(f"{r['name'].ljust(wname)}  {r['exit']:4d}  {r['passed']:6d}  {r['failed']:6d}")
    else:
        print("(empty suite)")
    return max((r["exit"] for r in rows), default=EXIT_OK)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="brakke-lab",
                                     description="curve-network flow laboratory")
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_ver = sub.add_parser("verify", help="run a suite of configs")
    p_ver.add_argument("suite")
    p_ver.add_argument("--out", default=None)
    p_ver.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config, args.out, args.seed)
    if args.command == "verify":
        return verify_all(args.suite, args.out, args.workers)
    parser.print_help()
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
