import numpy as np

from poissonext.quadrature import (
    gauss_legendre,
    gl_points_2d,
    integrate_log_kernel,
    legendre_coeffs_tail,
)


def test_gauss_legendre_exactness():
    t, w = gauss_legendre(4)
    # exact through degree 7
    assert abs(np.sum(w * t**6) - 2.0 / 7.0) < 1e-15
    assert abs(np.sum(w * t**7)) < 1e-15


def test_gl_points_2d_polynomial():
    pts, w = gl_points_2d((0.0, 2.0, -1.0, 3.0), 6)
    val = np.sum(w * pts[:, 0] ** 3 * pts[:, 1] ** 2)
    # int_0^2 x^3 dx * int_{-1}^3 y^2 dy = 4 * 28/3
    assert abs(val - 4 * 28.0 / 3.0) < 1e-12


# Reference values from scipy.integrate.dblquad at epsabs=1e-13 for
# (1/2pi) int_{[-0.5,0.5]^2} log|x-y| g(y) dy.
LOG_CASES = [
    ((2.0, 1.0), "const", 0.128067609837992),
    ((0.7, 0.55), "gauss", -0.010153063087893),
    ((0.1, -0.2), "gauss", -0.093676036539690),  # singularity inside
]


def _density(name):
    if name == "const":
        return lambda pts: np.ones(len(pts))
    return lambda pts: np.exp(-3.0 * (pts[:, 0] ** 2 + 2 * pts[:, 1] ** 2))


def test_integrate_log_kernel_against_reference():
    rect = (-0.5, 0.5, -0.5, 0.5)
    for x, name, ref in LOG_CASES:
        v = integrate_log_kernel(np.array(x), rect, _density(name))
        assert abs(v - ref) < 1e-12, (x, name)


def test_integrate_log_kernel_vector_density():
    rect = (-0.25, 0.25, 0.0, 0.5)
    target = np.array([0.05, 0.3])

    def gvec(pts):
        return np.column_stack([np.ones(len(pts)), pts[:, 0] * pts[:, 1]])

    both = integrate_log_kernel(target, rect, gvec)
    one = integrate_log_kernel(target, rect, lambda p: np.ones(len(p)))
    two = integrate_log_kernel(target, rect, lambda p: p[:, 0] * p[:, 1])
    np.testing.assert_allclose(both, [one, two], rtol=1e-13, atol=1e-15)


def test_legendre_tail_resolved_vs_unresolved():
    t, _ = gauss_legendre(16)
    smooth = np.exp(0.3 * t)
    assert legendre_coeffs_tail(smooth) < 1e-15
    wiggly = np.sin(40.0 * t)
    assert legendre_coeffs_tail(wiggly) > 1e-3
    assert legendre_coeffs_tail(np.zeros(16)) == 0.0
