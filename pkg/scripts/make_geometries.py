#!/usr/bin/env python3
"""Regenerate the geometry JSON files shipped under configs/geometry/."""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from brakke_lab import geometry  # noqa: E402

OUT = os.path.join(os.path.dirname(__file__), "..", "configs", "geometry")


def tips(angles_deg):
    return [(float(np.cos(a)), float(np.sin(a))) for a in np.deg2rad(angles_deg)]


def main():
    os.makedirs(OUT, exist_ok=True)

    geometry.save_network(
        geometry.Network(curves=(geometry.circle_polygon(700),)),
        os.path.join(OUT, "circle_unit.json"))

    geometry.save_network(
        geometry.Network(curves=(geometry.circle_polygon(1400, radius=2.0),)),
        os.path.join(OUT, "circle_r2.json"))

    geometry.save_network(
        geometry.segment_network((0.0, 0.0), (1.0, 0.0), n=50),
        os.path.join(OUT, "segment_unit.json"))

    # all inscribed angles below 120 degrees: junction settles interior
    geometry.save_network(
        geometry.spoke_network(tips([90, 210, 330]), (0.3, 0.2), n=50),
        os.path.join(OUT, "triple_junction_acute.json"))

    # inscribed angle at (1, 0) is 130 degrees: junction hits that vertex
    geometry.save_network(
        geometry.spoke_network(tips([50, 310, 0]), (0.0, 0.0), n=50),
        os.path.join(OUT, "triple_junction_obtuse.json"))

    geometry.save_network(
        geometry.Network(curves=(geometry.segment_curve(
            (-4.0, 0.0), (4.0, 0.0), n=800),)),
        os.path.join(OUT, "full_line.json"))

    half = geometry.segment_curve(
        (0.0, 0.0), (3.0, 0.0), n=300,
        start_constraint=geometry.fixed("O"), end_constraint=geometry.fixed("E"))
    geometry.save_network(
        geometry.Network(curves=(half,), boundary_points={
            "O": np.zeros(2), "E": np.array([3.0, 0.0])}),
        os.path.join(OUT, "half_line.json"))

    btraj = geometry.BoundaryTrajectory(
        [0.0, 0.5, 1.0], [[1.0, 0.0], [1.25, 0.0], [1.5, 0.0]])
    dragged = geometry.segment_curve(
        (0.0, 0.0), (1.0, 0.0), n=50,
        start_constraint=geometry.fixed("A"), end_constraint=geometry.moving("B"))
    geometry.save_network(
        geometry.Network(curves=(dragged,), boundary_points={
            "A": np.zeros(2), "B": btraj}),
        os.path.join(OUT, "dragged_segment.json"))

    def ray(angle, mult=1):
        d = np.array([np.cos(angle), np.sin(angle)])
        return geometry.DiscreteCurve(
            np.linspace(0.0, 1.0, 61)[:, None] * d, mult)

    geometry.save_network(
        geometry.Network(curves=(ray(0.3),)),
        os.path.join(OUT, "wedge_half_line.json"))
    geometry.save_network(
        geometry.Network(curves=(ray(0.3), ray(0.3 + np.pi))),
        os.path.join(OUT, "wedge_full_line.json"))
    geometry.save_network(
        geometry.Network(curves=(ray(-np.pi / 6), ray(np.pi / 6))),
        os.path.join(OUT, "wedge_two_rays.json"))

    print(f"geometry files written to {os.path.abspath(OUT)}")


if __name__ == "__main__":
    main()
