import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brakke_lab import geometry, varifold
from brakke_lab.geometry import (
    DiscreteCurve,
    Network,
    circle_polygon,
    segment_curve,
    segment_network,
    spoke_network,
)
from brakke_lab.varifold import (
    boundary_vectors,
    divergence_identity_residual,
    first_variation,
    is_standard_state,
    junction_imbalance,
    mod2_boundary,
    nu_within_unit,
    to_varifold,
    trig_bound,
    trig_min_bruteforce,
)


# ---------------------------------------------------------------------------
# varifold construction


def test_to_varifold_segment_weights():
    v = to_varifold(segment_network((0, 0), (1, 0), n=10))
    assert len(v.weights) == 10
    assert v.total_weight == pytest.approx(1.0, abs=1e-12)


def test_to_varifold_multiplicity():
    v = to_varifold(segment_network((0, 0), (1, 0), n=10, multiplicity=3))
    assert v.total_weight == pytest.approx(3.0, abs=1e-12)


def test_to_varifold_circle_tangents_perpendicular_to_radius():
    n = 500
    v = to_varifold(Network(curves=(circle_polygon(n),)))
    rad = v.points / np.linalg.norm(v.points, axis=1)[:, None]
    dots = np.abs(np.einsum("ij,ij->i", rad, v.tangents))
    assert dots.max() <= np.pi / n


# ---------------------------------------------------------------------------
# first variation


def test_first_variation_constant_field_vanishes():
    net = spoke_network([(1, 0), (0, 1), (-1, -1)], (0.05, 0.1), n=6)
    fv = first_variation(net, lambda p: np.array([2.0, -3.0]), lambda p: np.zeros((2, 2)))
    assert abs(fv) <= 1e-12


def test_first_variation_identity_on_segment():
    net = segment_network((0, 0), (1, 0), n=16)
    fv = first_variation(net, lambda p: p, lambda p: np.eye(2))
    assert fv == pytest.approx(1.0, abs=1e-12)


def test_first_variation_identity_on_circle():
    net = Network(curves=(circle_polygon(10**4),))
    fv = first_variation(net, lambda p: p, lambda p: np.eye(2))
    assert fv == pytest.approx(2 * np.pi, abs=1e-4)


def test_first_variation_rejects_bad_gradient():
    net = segment_network((0, 0), (1, 0), n=8)
    with pytest.raises(ValueError, match="inconsistent"):
        first_variation(net, lambda p: p, lambda p: 2.0 * np.eye(2))


# ---------------------------------------------------------------------------
# boundary vectors


def test_boundary_vector_single_end():
    net = segment_network((0, 0), (2, 0), n=20)
    bvs = {b.at: b.nu for b in boundary_vectors(net)}
    assert np.allclose(bvs["A"], [-1.0, 0.0], atol=1e-12)
    assert np.allclose(bvs["B"], [1.0, 0.0], atol=1e-12)
    assert nu_within_unit(boundary_vectors(net))


def test_boundary_vector_three_at_120_cancels():
    # three curves ending at a common *boundary* point at equal angles
    curves = []
    for k in range(3):
        a = 2 * np.pi * k / 3
        tip = np.array([np.cos(a), np.sin(a)])
        curves.append(
            segment_curve(tip, (0.0, 0.0), n=8,
                          start_constraint=geometry.fixed(f"T{k}"),
                          end_constraint=geometry.fixed("O"))
        )
    net = Network(
        curves=tuple(curves),
        boundary_points={"O": np.zeros(2), **{f"T{k}": np.array(
            [np.cos(2 * np.pi * k / 3), np.sin(2 * np.pi * k / 3)]) for k in range(3)}},
    )
    bvs = {b.at: b.nu for b in boundary_vectors(net)}
    assert np.linalg.norm(bvs["O"]) <= 1e-12


def test_boundary_vector_two_ends_at_angle():
    # outward tangents at +-60 degrees: |nu| = 2 cos(60) = 1.0
    theta = np.pi / 3
    curves = []
    for s in (+1, -1):
        d = np.array([np.cos(s * theta), np.sin(s * theta)])
        curves.append(
            segment_curve(-d, (0.0, 0.0), n=6,
                          start_constraint=geometry.fixed(f"T{s}"),
                          end_constraint=geometry.fixed("O"))
        )
    net = Network(
        curves=tuple(curves),
        boundary_points={
            "O": np.zeros(2),
            "T1": -np.array([np.cos(theta), np.sin(theta)]),
            "T-1": -np.array([np.cos(-theta), np.sin(-theta)]),
        },
    )
    bvs = {b.at: b.nu for b in boundary_vectors(net)}
    assert np.linalg.norm(bvs["O"]) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# trig bound


def test_trig_bound_values():
    assert trig_bound(1, 0.7) == pytest.approx(1.0, abs=1e-15)
    assert trig_bound(2, np.pi / 3) == pytest.approx(1.0, abs=1e-12)
    assert trig_bound(3, np.pi / 4) == pytest.approx(2.23606797749979, abs=1e-12)


def test_trig_bound_domain():
    with pytest.raises(ValueError):
        trig_bound(0, 0.1)
    with pytest.raises(ValueError):
        trig_bound(2, np.pi / 2)


@pytest.mark.parametrize("k,grid", [(1, 101), (2, 101), (3, 41), (4, 21), (5, 13)])
@pytest.mark.parametrize("theta", [0.0, np.pi / 8, np.pi / 4, 3 * np.pi / 8])
def test_trig_bound_brute_force(k, grid, theta):
    bound = trig_bound(k, theta)
    brute = trig_min_bruteforce(k, theta, grid=grid)
    resolution = k * (2 * theta / max(1, grid - 1)) + 1e-12
    assert brute >= bound - resolution          # never undercut
    assert brute <= bound + resolution          # sharp (endpoints hit the min)


# ---------------------------------------------------------------------------
# mod-2 boundary and standardness


def test_mod2_single_curve():
    ch = mod2_boundary(segment_network((0, 0), (1, 0), n=5))
    assert len(ch.odd_points) == 2


def test_mod2_triple_junction_includes_junction():
    tips = [(1.0, 0.0), (-0.5, 0.866), (-0.5, -0.866)]
    net = spoke_network(tips, (0.02, 0.01), n=4)
    ch = mod2_boundary(net)
    assert len(ch.odd_points) == 4
    assert any(np.allclose(p, net.junctions["P"], atol=1e-12) for p in ch.odd_points)


def test_mod2_even_multiplicity_cancels():
    net = Network(curves=(segment_curve((0, 0), (1, 0), n=4, multiplicity=2),))
    assert len(mod2_boundary(net).odd_points) == 0
    two = Network(curves=(segment_curve((0, 0), (1, 0), n=4),
                          segment_curve((0, 0), (1, 0), n=7)))
    assert len(mod2_boundary(two).odd_points) == 0


def test_mod2_closed_loop_empty():
    net = Network(curves=(circle_polygon(64),))
    assert len(mod2_boundary(net).odd_points) == 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_mod2_homomorphism_disjoint_union(seed):
    rng = np.random.default_rng(seed)

    def random_net(offset):
        curves = []
        for _ in range(rng.integers(1, 4)):
            n = rng.integers(1, 5)
            pts = np.cumsum(rng.normal(size=(n + 1, 2)) + [1.5, 0.0], axis=0) + offset
            curves.append(DiscreteCurve(pts, int(rng.integers(1, 3))))
        return Network(curves=tuple(curves))

    n1 = random_net(np.zeros(2))
    n2 = random_net(np.array([100.0, 0.0]))
    union = Network(curves=n1.curves + n2.curves)
    b_union = {tuple(np.round(p, 9)) for p in mod2_boundary(union).odd_points}
    b1 = {tuple(np.round(p, 9)) for p in mod2_boundary(n1).odd_points}
    b2 = {tuple(np.round(p, 9)) for p in mod2_boundary(n2).odd_points}
    assert b_union == b1 ^ b2


def test_is_standard_single_curve():
    net = segment_network((0, 0), (1, 0), n=6)
    rep = is_standard_state(net, {"A", "B"})
    assert rep.is_standard
    assert not rep.violators


def test_is_standard_triple_junction_violator():
    tips = [(1.0, 0.0), (-0.5, 0.866), (-0.5, -0.866)]
    net = spoke_network(tips, (0.02, 0.01), n=4)
    rep = is_standard_state(net, {"A", "B", "C"})
    assert not rep.is_standard
    assert rep.violators == ("P",)


def test_is_standard_with_disjoint_loop():
    seg = segment_curve((0, 0), (1, 0), n=4,
                        start_constraint=geometry.fixed("A"),
                        end_constraint=geometry.fixed("B"))
    loop = circle_polygon(32, radius=0.3, center=(5.0, 5.0))
    net = Network(curves=(seg, loop),
                  boundary_points={"A": np.zeros(2), "B": np.array([1.0, 0.0])})
    assert is_standard_state(net, {"A", "B"}).is_standard


# ---------------------------------------------------------------------------
# discrete divergence identity under refinement


POLY_FIELDS = [
    (lambda p: np.array([p[0] ** 2, p[1]]),
     lambda p: np.array([[2 * p[0], 0.0], [0.0, 1.0]])),
    (lambda p: np.array([p[0] * p[1], -p[0]]),
     lambda p: np.array([[p[1], p[0]], [-1.0, 0.0]])),
    (lambda p: np.array([np.sin(p[0]), np.cos(p[1])]),
     lambda p: np.array([[np.cos(p[0]), 0.0], [0.0, -np.sin(p[1])]])),
    (lambda p: np.array([p[1] ** 2, p[0] ** 2]),
     lambda p: np.array([[0.0, 2 * p[1]], [2 * p[0], 0.0]])),
    (lambda p: np.array([p[0] ** 3 / 3, p[0] * p[1]]),
     lambda p: np.array([[p[0] ** 2, 0.0], [p[1], p[0]]])),
]


def bent_arc_network(n):
    x = np.linspace(0.0, 1.5, n + 1)
    y = 0.3 * np.sin(1.7 * x)
    pts = np.stack([x, y], axis=1)
    c = DiscreteCurve(pts, 1, geometry.fixed("A"), geometry.fixed("B"))
    return Network(curves=(c,),
                   boundary_points={"A": pts[0].copy(), "B": pts[-1].copy()})


@pytest.mark.parametrize("field_idx", range(5))
def test_divergence_identity_refinement_order(field_idx):
    # midpoint quadrature makes the identity exact for fields quadratic in
    # the coordinates; for the rest the residual decays at order >= 1
    X, G = POLY_FIELDS[field_idx]
    errs = []
    for n in (40, 80, 160):
        err_arc = divergence_identity_residual(bent_arc_network(n), X, G)
        err_circ = divergence_identity_residual(
            Network(curves=(circle_polygon(n),)), X, G)
        errs.append(max(err_arc, err_circ))
    if max(errs) <= 1e-12:
        return
    order1 = math.log2(errs[0] / errs[1])
    order2 = math.log2(errs[1] / errs[2])
    assert order1 >= 1.0
    assert order2 >= 1.0


def test_junction_imbalance_reports_sum_of_tangents():
    s3 = math.sqrt(3.0) / 2.0
    tips = [(1.0, 0.0), (-0.5, s3), (-0.5, -s3)]
    net = spoke_network(tips, (0.0, 0.0), n=3)
    imb = junction_imbalance(net)
    # spokes from the circumcenter of an equilateral set balance exactly
    assert np.linalg.norm(imb["P"]) <= 1e-12
