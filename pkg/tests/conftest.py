import time

import numpy as np
import pytest

from brakke_lab import flow, geometry


def circle_network(radius: float, h: float) -> geometry.Network:
    n = max(16, int(round(2 * np.pi * radius / h)))
    return geometry.Network(curves=(geometry.circle_polygon(n, radius=radius),))


def equilateral_tips():
    return [(np.cos(a), np.sin(a)) for a in np.deg2rad([90.0, 210.0, 330.0])]


def obtuse_tips():
    # inscribed angle at (1, 0) is 130 degrees: the junction must hit it
    return [(np.cos(a), np.sin(a)) for a in np.deg2rad([50.0, 310.0, 0.0])]


@pytest.fixture(scope="session")
def circle_run_timed():
    """Unit-circle flow at h=0.01 run to extinction, with wall time."""
    net = circle_network(1.0, 0.01)
    params = flow.FlowParams(target_h=0.01, t_end=0.6)
    t0 = time.perf_counter()
    traj = flow.run(net, params)
    wall = time.perf_counter() - t0
    return traj, wall


@pytest.fixture(scope="session")
def circle_traj(circle_run_timed):
    return circle_run_timed[0]


@pytest.fixture(scope="session")
def circle_levels():
    """Unit-circle runs to t=0.4 at three resolutions, for refinement audits."""
    out = {}
    for h in (0.04, 0.02, 0.01):
        out[h] = flow.run(circle_network(1.0, h),
                          flow.FlowParams(target_h=h, t_end=0.4))
    return out


@pytest.fixture(scope="session")
def junction_short_traj():
    net = geometry.spoke_network(equilateral_tips(), (0.3, 0.2), n=50)
    return flow.run(net, flow.FlowParams(target_h=0.02, t_end=0.4))


@pytest.fixture(scope="session")
def junction_long_traj():
    net = geometry.spoke_network(equilateral_tips(), (0.3, 0.2), n=100)
    params = flow.FlowParams(target_h=0.01, t_end=5.0, snapshot_every=200)
    return flow.run(net, params)


@pytest.fixture(scope="session")
def dragged_traj():
    btraj = geometry.BoundaryTrajectory(
        [0.0, 0.5, 1.0], [[1.0, 0.0], [1.25, 0.0], [1.5, 0.0]])
    c = geometry.segment_curve(
        (0.0, 0.0), (1.0, 0.0), n=100,
        start_constraint=geometry.fixed("A"), end_constraint=geometry.moving("B"))
    net = geometry.Network(curves=(c,),
                           boundary_points={"A": np.array([0.0, 0.0]), "B": btraj})
    return flow.run(net, flow.FlowParams(target_h=0.01, t_end=1.0))


@pytest.fixture(scope="session")
def halfline_flow_traj():
    """A pinned curve from the origin, initially bent, relaxing to a segment."""
    x = np.linspace(0.0, 2.0, 201)
    y = 0.08 * np.sin(np.pi * x / 2.0)
    pts = np.stack([x, y], axis=1)
    c = geometry.DiscreteCurve(pts, 1, geometry.fixed("O"), geometry.fixed("E"))
    net = geometry.Network(
        curves=(c,),
        boundary_points={"O": np.array([0.0, 0.0]), "E": np.array([2.0, 0.0])})
    return flow.run(net, flow.FlowParams(target_h=0.01, t_end=0.4))


@pytest.fixture(scope="session")
def circle_r2_traj():
    net = circle_network(2.0, 0.01)
    return flow.run(net, flow.FlowParams(target_h=0.01, t_end=0.6))
