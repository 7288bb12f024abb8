"""Ready-made test problems with analytic references.

Each builder returns a fresh ProblemSpec.  The reference fields and
their hand-derived Laplacians live here as plain functions; every
Laplacian is cross-checked against finite differences in the test
suite, so a bad derivation cannot hide.

Geometry notes.  The two-ring domain fixes 200 outer / 180 inner
panels and caps cut-square sides at (outer circumference)/200, which
forces seven tree levels along the boundary in adaptive mode.  The
three-starfish configuration places each sharp Gaussian center just
inside one obstacle; the third starfish is centered at (0.2, 0.25),
the only placement of the three that admits a clean clearance (the
nearest alternative reading overlaps the five-armed obstacle).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expi

from .geometry import CurveSpec
from .solver import ProblemSpec

TWO_RING_CUT_SCALE = 0.0087      # outer circumference 1.7402 / 200 panels

_SQ_BETA = 800.0
_SQ_POINTS = np.array([(-0.35, -0.135), (-0.09, 0.42),
                       (0.445, 0.09), (0.135, -0.405)])
_STAR_CENTERS = np.array([(0.1, 0.07), (0.09, -0.25), (-0.21, -0.25)])
_STAR_WIDTHS = np.array([1e-3, 1e-3 / 2.1, 1e-3 / 4.5])
_STAR_LOG_POINT = (-0.2, 0.0)
_STAR_RADIATION = -10.0


def oscillatory_reference(pts):
    """sin(10(x+y)) + x^2 - 3y + 8 + exp(-500 x^2)."""
    x, y = pts[:, 0], pts[:, 1]
    return np.sin(10.0 * (x + y)) + x * x - 3.0 * y + 8.0 + np.exp(-500.0 * x * x)


def oscillatory_source(pts):
    # Laplacian of oscillatory_reference, derived by hand
    x, y = pts[:, 0], pts[:, 1]
    return (-200.0 * np.sin(10.0 * (x + y)) + 2.0
            + (1e6 * x * x - 1000.0) * np.exp(-500.0 * x * x))


def bumps_log_reference(pts):
    """Three sharp Gaussians plus a log sink growing like -10 log|x|."""
    x, y = pts[:, 0], pts[:, 1]
    out = -5.0 * np.log((x + 0.2) ** 2 + y ** 2)
    for (cx, cy), b in zip(_STAR_CENTERS, _STAR_WIDTHS):
        out += np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / b)
    return out


def bumps_source(pts):
    # Laplacian of each Gaussian: (4 r^2 / b^2 - 4 / b) exp(-r^2 / b);
    # the log term is harmonic away from its (excluded) center
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros(len(pts))
    for (cx, cy), b in zip(_STAR_CENTERS, _STAR_WIDTHS):
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        out += (4.0 * r2 / b ** 2 - 4.0 / b) * np.exp(-r2 / b)
    return out


def corner_reference(pts):
    """-2 sum_j (Ei(-beta r_j^2) + log r_j^2), singular points outside."""
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros(len(pts))
    for cx, cy in _SQ_POINTS:
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        out -= 2.0 * (expi(-_SQ_BETA * r2) + np.log(r2))
    return out


def corner_source(pts):
    # r d/dr of (r u') for u(r) = Ei(-b r^2) + 2 log r collapses to
    # -4 b exp(-b r^2); the -2 prefactor and 4 centers give 8b sum exp
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros(len(pts))
    for cx, cy in _SQ_POINTS:
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        out += 8.0 * _SQ_BETA * np.exp(-_SQ_BETA * r2)
    return out


def _two_ring_curves():
    outer = CurveSpec("fourier-polar",
                      {"center": (0.0, 0.0),
                       "cos_coeffs": [0.25, 0, 0, 0, 0, 0.02, 0.01, 0, 0.01, 0, 0.01],
                       "sin_coeffs": [0.0, 0, 0, 0.01]},
                      min_panels=200)
    inner = CurveSpec("fourier-polar",
                      {"center": (0.0, 0.0),
                       "cos_coeffs": [0.05, 0, 0.005, 0, 0, 0.005, 0, 0.005],
                       "sin_coeffs": [0.0, 0, 0, 0.005]},
                      reverse=True, min_panels=180)
    return [outer, inner]


def interior_two_ring() -> ProblemSpec:
    """Doubly connected wavy annulus, oscillatory reference field."""
    return ProblemSpec(
        boundaries=_two_ring_curves(), kind="interior",
        f=oscillatory_source, g=oscillatory_reference,
        reference=oscillatory_reference,
        tol_tree=0.5e-11, cut_scale=TWO_RING_CUT_SCALE, max_level=7,
        uniform_level=4, name="interior-two-ring")


def interior_saw() -> ProblemSpec:
    """Simply connected toothed blade, same oscillatory field."""
    saw = CurveSpec("saw", {"scale": 0.17}, min_panels=253)
    return ProblemSpec(
        boundaries=[saw], kind="interior",
        f=oscillatory_source, g=oscillatory_reference,
        reference=oscillatory_reference,
        uniform_level=4, max_level=7, name="interior-saw")


def exterior_three_starfish() -> ProblemSpec:
    """Unbounded domain outside three starfish, u ~ -10 log|x| far away."""
    stars = [
        CurveSpec("starfish", {"radius": 0.12, "amplitude": 0.3, "arms": 5,
                               "center": (0.186, -0.15)}, min_panels=100),
        CurveSpec("starfish", {"radius": 0.17, "amplitude": 0.3, "arms": 4,
                               "center": (-0.21, -0.03)}, min_panels=100),
        CurveSpec("starfish", {"radius": 0.2, "amplitude": 0.2, "arms": 3,
                               "center": (0.2, 0.25)}, min_panels=100),
    ]
    return ProblemSpec(
        boundaries=stars, kind="exterior",
        f=bumps_source, g=bumps_log_reference,
        reference=bumps_log_reference, radiation=_STAR_RADIATION,
        uniform_level=4, max_level=8, name="exterior-three-starfish")


def interior_square() -> ProblemSpec:
    """Rotated square with corner-graded panels, smooth data."""
    half, phi = 0.25, np.pi / 3.0
    base = np.array([(half, half), (-half, half), (-half, -half), (half, -half)])
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    verts = base @ rot.T + np.array([0.01, -0.02])
    square = CurveSpec("polygon", {"vertices": [tuple(v) for v in verts]},
                       min_panels=16, grade_corners=True,
                       grade_ratio=0.5, grade_min_len=1e-6)
    return ProblemSpec(
        boundaries=[square], kind="interior",
        f=corner_source, g=corner_reference, reference=corner_reference,
        uniform_level=5, max_level=8, name="interior-square")


def interior_star() -> ProblemSpec:
    """Five-armed star solved with the ray extension backend."""
    star = CurveSpec("starfish", {"radius": 0.3, "amplitude": 0.2, "arms": 5,
                                  "center": (0.0, 0.0), "spin": 1},
                     min_panels=60)
    return ProblemSpec(
        boundaries=[star], kind="interior",
        f=oscillatory_source, g=oscillatory_reference,
        reference=oscillatory_reference,
        uniform_level=4, max_level=7, extension="ray", name="interior-star")


PRESETS = {
    "interior-two-ring": interior_two_ring,
    "interior-saw": interior_saw,
    "exterior-three-starfish": exterior_three_starfish,
    "interior-square": interior_square,
    "interior-star": interior_star,
}


def preset(name: str) -> ProblemSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}") from None
