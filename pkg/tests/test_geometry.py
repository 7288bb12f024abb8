import numpy as np
import pytest

from poissonext.errors import GeometryError, OnCurveError
from poissonext.geometry import BoundarySet, CurveSpec, build_boundary, classify_point

# Arclength references from scipy.integrate.quad on |z'(t)| at 1e-14 tolerance.
SAW_ARCLENGTH = 5.611531087302788
TWORING_OUTER_ARCLENGTH = 1.740158576371838
TWORING_INNER_ARCLENGTH = 0.370185376348699
STARFISH_ARCLENGTH = 1.082064420061817  # R=0.12, a=0.3, N=5


def saw_spec(min_panels=64):
    return CurveSpec("saw", {"scale": 0.17}, min_panels=min_panels)


def tworing_specs():
    outer = CurveSpec(
        "fourier-polar",
        {"center": (0, 0),
         "cos_coeffs": [0.25, 0, 0, 0, 0, 0.02, 0.01, 0, 0.01, 0, 0.01],
         "sin_coeffs": [0, 0, 0, 0.01]},
        min_panels=200,
    )
    inner = CurveSpec(
        "fourier-polar",
        {"center": (0, 0),
         "cos_coeffs": [0.05, 0, 0.005, 0, 0, 0.005, 0, 0.005],
         "sin_coeffs": [0, 0, 0, 0.005]},
        reverse=True,
        min_panels=180,
    )
    return [outer, inner]


def rotated_square_spec(grade=True):
    th = np.pi / 3
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    base = 0.25 * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    verts = base @ rot.T + np.array([0.01, -0.02])
    return CurveSpec("polygon", {"vertices": verts}, min_panels=32, grade_corners=grade)


def test_saw_arclength_and_panel_floor():
    b = build_boundary([saw_spec()], "interior")
    assert abs(b.arclengths[0] - SAW_ARCLENGTH) < 1e-12
    assert b.components[0].n_panels >= 64


def test_refinement_invariance():
    a = build_boundary([saw_spec(64)], "interior").arclengths[0]
    c = build_boundary([saw_spec(190)], "interior").arclengths[0]
    assert abs(a - c) < 1e-13


def test_tworing_arclengths_and_orientations():
    b = build_boundary(tworing_specs(), "interior")
    assert abs(b.arclengths[0] - TWORING_OUTER_ARCLENGTH) < 1e-12
    assert abs(b.arclengths[1] - TWORING_INNER_ARCLENGTH) < 1e-12
    assert list(b.orientations) == [1, -1]
    assert b.components[0].n_panels >= 200
    assert b.components[1].n_panels >= 180


def test_starfish_arclength_exterior():
    sf = CurveSpec("starfish",
                   {"radius": 0.12, "amplitude": 0.3, "arms": 5,
                    "center": (0.186, -0.15), "spin": -1},
                   min_panels=40)
    b = build_boundary([sf], "exterior")
    assert abs(b.arclengths[0] - STARFISH_ARCLENGTH) < 1e-12
    assert list(b.orientations) == [-1]


def test_saw_membership_both_routes():
    # r(0) = 0.17 * 2 = 0.34 exactly, so these two straddle the curve
    b = build_boundary([saw_spec()], "interior")
    inside, _ = classify_point(b, (0.33, 0.0))
    outside, _ = classify_point(b, (0.35, 0.0))
    assert inside and not outside
    got = b.contains(np.array([[0.33, 0.0], [0.35, 0.0], [0.0, 0.0], [2.0, 0.0]]))
    assert list(got) == [True, False, True, False]


def test_hole_membership():
    b = build_boundary(tworing_specs(), "interior")
    pts = np.array([[0.15, 0.0], [0.02, 0.0], [0.0, 0.0], [0.5, 0.5]])
    # annulus point in, hole-center and far points out
    assert list(b.contains(pts)) == [True, False, False, False]
    w = b.winding_numbers(pts)
    assert list(w) == [1, 0, 0, 0]


def test_classify_agrees_with_bulk_winding():
    b = build_boundary(tworing_specs(), "interior")
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.35, 0.35, size=(150, 2))
    keep = b.nearest_node_distance(pts) > 1e-3
    pts = pts[keep]
    bulk = b.contains(pts)
    single = np.array([classify_point(b, p)[0] for p in pts])
    assert np.array_equal(bulk, single)


def test_normals_point_out_of_domain():
    for kind, specs in [
        ("interior", tworing_specs()),
        ("exterior", [CurveSpec("starfish",
                                {"radius": 0.2, "amplitude": 0.2, "arms": 3,
                                 "center": (0.2, 0.15), "spin": -1},
                                min_panels=40)]),
    ]:
        b = build_boundary(specs, kind)
        eps = 1e-6
        for c in b.components:
            z = c.nodes_z.ravel()[::37]
            nu = c.normal_z.ravel()[::37]
            assert np.allclose(np.abs(nu), 1.0, atol=1e-13)
            plus = np.column_stack([(z + eps * nu).real, (z + eps * nu).imag])
            minus = np.column_stack([(z - eps * nu).real, (z - eps * nu).imag])
            assert not b.contains(plus).any()
            assert b.contains(minus).all()


def test_circle_curvature_sign():
    ccw = CurveSpec("fourier-polar", {"center": (0, 0), "cos_coeffs": [0.3]}, min_panels=16)
    b = build_boundary([ccw], "interior")
    np.testing.assert_allclose(b.curvature, 1 / 0.3, rtol=1e-12)
    cw = CurveSpec("fourier-polar", {"center": (0, 0), "cos_coeffs": [0.3]},
                   reverse=True, min_panels=16)
    b2 = build_boundary([cw], "exterior")
    np.testing.assert_allclose(b2.curvature, -1 / 0.3, rtol=1e-12)


def test_wrong_orientation_rejected():
    bad_outer = tworing_specs()[0]
    bad_outer.reverse = True  # clockwise outer curve
    with pytest.raises(GeometryError):
        build_boundary([bad_outer], "interior")
    ccw_star = CurveSpec("starfish",
                         {"radius": 0.2, "amplitude": 0.2, "arms": 3,
                          "center": (0, 0), "spin": 1},
                         min_panels=40)
    with pytest.raises(GeometryError):
        build_boundary([ccw_star], "exterior")


def test_on_curve_point_raises():
    b = build_boundary([saw_spec()], "interior")
    with pytest.raises(OnCurveError):
        classify_point(b, (0.34, 0.0))  # z(0) = 0.34 exactly


def test_rotated_square():
    b = build_boundary([rotated_square_spec()], "interior")
    assert abs(b.arclengths[0] - 2.0) < 1e-13
    assert b.contains(np.array([[0.01, -0.02]]))[0]
    assert not b.contains(np.array([[0.5, 0.5]]))[0]
    # graded panels reach below 1e-6 arc near each corner
    assert b.panel_arc_all.min() < 2e-6
    # no panel straddles a corner: every corner parameter is a break
    comp = b.components[0]
    for corner_t in comp.curve.corners:
        assert np.min(np.abs(comp.breaks - corner_t)) < 1e-12
    inside, dlb = classify_point(b, (0.01, -0.02))
    assert inside and 0.2 < dlb <= 0.25


def test_distance_lower_bound_is_a_lower_bound():
    b = build_boundary([saw_spec()], "interior")
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.45, 0.45, size=(60, 2))
    lb = b.distance_lower_bound(pts)
    # true distance estimated by dense sampling of the curve
    t = np.linspace(0, 2 * np.pi, 200001)
    z = b.components[0].curve.z(t)
    for p, bound in zip(pts, lb):
        d = np.min(np.abs(z - (p[0] + 1j * p[1])))
        assert bound <= d + 1e-9


def test_touching_components_rejected():
    a = CurveSpec("fourier-polar", {"center": (0, 0), "cos_coeffs": [0.3]}, min_panels=16)
    hole = CurveSpec("fourier-polar", {"center": (0.15, 0), "cos_coeffs": [0.16]},
                     reverse=True, min_panels=16)
    with pytest.raises(GeometryError):
        build_boundary([a, hole], "interior")
