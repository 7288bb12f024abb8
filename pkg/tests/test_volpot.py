import math

import numpy as np
import pytest
from numpy.polynomial.chebyshev import chebval

from poissonext.chebyshev import grid2d
from poissonext.errors import TreeError
from poissonext.geometry import CurveSpec, build_boundary
from poissonext.kernels import available_backends
from poissonext.quadrature import integrate_log_kernel
from poissonext.quadtree import build_tree, build_uniform_tree
from poissonext.volpot import (
    box_multipole,
    direct_volume_oracle,
    eval_at_points,
    eval_volume_potential,
    order_for_tolerance,
    precompute_near_tables,
    radial_gaussian_potential,
)


class Field:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)


def sample_leaves(tree, fn):
    """Fill every leaf's 8x8 grid with fn(x, y)."""
    ref = grid2d(8)
    out = np.zeros((len(tree.leaves), 8, 8))
    for i in range(len(tree.leaves)):
        pts = tree.centers[i] + 0.5 * tree.sides[i] * ref
        out[i] = fn(pts[:, 0], pts[:, 1]).reshape(8, 8)
    return out


def leaf_node_points(tree):
    ref = grid2d(8)
    return (tree.centers[:, None, :]
            + 0.5 * tree.sides[:, None, None] * ref[None]).reshape(-1, 2)


def circle_boundary(radius=0.35, center=(0.0, 0.0)):
    return build_boundary(
        [CurveSpec("fourier-polar", {"center": center, "cos_coeffs": [radius]},
                   min_panels=48)],
        "interior",
    )


def smooth_fn(x, y):
    return np.sin(3.0 * x) * np.cos(2.0 * y)


@pytest.fixture(scope="module")
def tables():
    return precompute_near_tables()


@pytest.fixture(scope="module")
def uni4(tables):
    """Level-4 uniform tree with a smooth global density, potential solved."""
    tree = build_uniform_tree(circle_boundary(), 4)
    field = Field(sample_leaves(tree, smooth_fn))
    vol = eval_volume_potential(field, tree, tables=tables)
    return tree, field, vol


# -- near-field tables ------------------------------------------------------


def test_order_for_tolerance_monotone():
    assert order_for_tolerance(1e-3) < order_for_tolerance(1e-11)
    assert 8 <= order_for_tolerance(1e-1)
    assert order_for_tolerance(1e-300) <= 60


def test_log_quadrature_center_closed_form():
    # int_{[-1,1]^2} log|y| dy / (2 pi) has an elementary value;
    # pins the quadrature engine the tables are built with
    val = float(integrate_log_kernel(
        (0.0, 0.0), (-1.0, 1.0, -1.0, 1.0), lambda p: np.ones(len(p))))
    exact = (math.log(2.0) - 3.0 + math.pi / 2.0) / math.pi
    assert abs(val - exact) <= 1e-14   # measured 2.5e-16


def test_table_mirror_antisymmetry(tables):
    # self-interaction entry for a T1(x) source is odd in the target's x
    c0 = tables.index[(0, 0, 0)]
    row = tables.table[c0, 1].reshape(8, 8)   # [iy, ix], x fastest
    assert np.max(np.abs(row + row[:, ::-1])) <= 1e-13   # measured 3.9e-16


def test_table_cache_reload(tables):
    again = precompute_near_tables()
    assert again.keys == tables.keys
    assert np.array_equal(again.table, tables.table)


def test_table_scale_rule_matches_direct():
    # reference-square table entry plus the log(h) mass correction must
    # equal the physical-box integral at any scale
    rng = np.random.default_rng(9)
    j1 = lambda k: 0.0 if k % 2 else 2.0 / (1.0 - k * k)
    for side in (2.0**-2, 2.0**-5):
        m, n = (int(v) for v in rng.integers(0, 8, 2))
        em = np.zeros(8); em[m] = 1.0
        en = np.zeros(8); en[n] = 1.0
        h = 0.5 * side
        ctr = rng.uniform(-0.2, 0.2, 2)
        tgt = ctr + np.array([1.7 * h, 0.4 * h])
        direct = float(integrate_log_kernel(
            tgt, (ctr[0] - h, ctr[0] + h, ctr[1] - h, ctr[1] + h),
            lambda p: chebval((p[:, 0] - ctr[0]) / h, em)
            * chebval((p[:, 1] - ctr[1]) / h, en)))
        ref = float(integrate_log_kernel(
            (tgt - ctr) / h, (-1.0, 1.0, -1.0, 1.0),
            lambda p: chebval(p[:, 0], em) * chebval(p[:, 1], en)))
        scaled = h * h * (ref + math.log(h) / (2.0 * math.pi) * j1(m) * j1(n))
        assert abs(direct - scaled) <= 1e-13   # measured 6.5e-19


# -- multipole expansions ---------------------------------------------------


def test_box_multipole_against_quadrature():
    side = 0.25
    center = (0.1, -0.05)
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((8, 8))
    exp = box_multipole(vals, center, side)
    # constant density mass comes out exactly as side^2 / 2pi
    exp1 = box_multipole(np.ones((8, 8)), center, side)
    assert abs(exp1.coeffs[0].real - side * side / (2.0 * math.pi)) <= 1e-16

    co = np.asarray(vals)
    from poissonext.chebyshev import eval_cheb2d, vals_to_coeffs2d
    cc = vals_to_coeffs2d(co)
    h = 0.5 * side
    tgt = np.array([center[0] + 5.0 * side, center[1] + 1.0 * side])
    direct = float(integrate_log_kernel(
        tgt, (center[0] - h, center[0] + h, center[1] - h, center[1] + h),
        lambda p: eval_cheb2d(cc, np.clip(p, np.array(center) - h,
                                          np.array(center) + h),
                              center=center, side=side)))
    got = float(exp.eval(complex(tgt[0], tgt[1])))
    assert abs(got - direct) <= 1e-13   # measured 8.7e-19 at 5 box widths


def test_far_field_decay():
    # after removing the monopole the residual must fall off like 1/r
    rng = np.random.default_rng(7)
    vals = rng.standard_normal((8, 8)) + 1.5   # nonzero dipole + mass
    exp = box_multipole(vals, (0.0, 0.0), 0.5)
    a0 = exp.coeffs[0].real

    def resid(r):
        return abs(float(exp.eval(complex(r, 0.0))) - a0 * math.log(r))

    slope = math.log10(resid(10.0) / resid(100.0))
    assert slope >= 0.9   # measured 1.03


# -- tree evaluation vs direct quadrature -----------------------------------


def test_potential_matches_oracle_uniform(uni4):
    tree, field, vol = uni4
    nodes = leaf_node_points(tree).reshape(len(tree.leaves), 8, 8, 2)
    rng = np.random.default_rng(11)
    scale = np.max(np.abs(vol.values))
    worst = 0.0
    for li in rng.choice(len(tree.leaves), 8, replace=False):
        iy, ix = rng.integers(0, 8, 2)
        ora = direct_volume_oracle(field, tree, nodes[li, iy, ix])
        worst = max(worst, abs(vol.values[li, iy, ix] - ora))
    assert worst / scale <= 1e-12   # measured 8.5e-16


def test_potential_matches_oracle_adaptive(tables):
    # refinement around an off-center bump gives levels 3..5 plus the
    # virtual subdivision path for coarse boxes near the cone boundary
    def bump(x, y):
        return np.exp(-((x - 0.1) ** 2 + (y + 0.05) ** 2) / 0.004)

    tree = build_tree(circle_boundary(), f=lambda p: bump(p[:, 0], p[:, 1]),
                      tol_source=1e-6, min_level=3, max_level=5)
    lv = {leaf.key[0] for leaf in tree.leaves}
    assert len(lv) >= 2   # mixed levels, so coarse/fine near configs fire

    field = Field(sample_leaves(tree, bump))
    vol = eval_volume_potential(field, tree, tables=tables)
    nodes = leaf_node_points(tree).reshape(len(tree.leaves), 8, 8, 2)
    rng = np.random.default_rng(4)
    scale = np.max(np.abs(vol.values))
    worst = 0.0
    for li in rng.choice(len(tree.leaves), 8, replace=False):
        iy, ix = rng.integers(0, 8, 2)
        ora = direct_volume_oracle(field, tree, nodes[li, iy, ix])
        worst = max(worst, abs(vol.values[li, iy, ix] - ora))
    assert worst / scale <= 1e-12   # measured 1.2e-15


def test_zero_field(uni4, tables):
    tree, _, _ = uni4
    vol = eval_volume_potential(Field(np.zeros((len(tree.leaves), 8, 8))),
                                tree, tables=tables)
    assert np.all(vol.values == 0.0)
    assert vol.mass == 0.0


def test_oracle_linearity(uni4):
    tree, field, _ = uni4
    rng = np.random.default_rng(2)
    other = Field(rng.standard_normal(field.values.shape))
    both = Field(field.values + other.values)
    t = (0.21, -0.13)
    va = direct_volume_oracle(field, tree, t)
    vb = direct_volume_oracle(other, tree, t)
    vab = direct_volume_oracle(both, tree, t)
    assert abs(vab - (va + vb)) <= 1e-13


def test_translation_invariance(tables):
    # shifting a compact density and its targets by one full leaf width
    # reproduces the identical potential values on the shifted grid
    delta = np.array([2.0**-4, -(2.0**-4)])
    tree_a = build_uniform_tree(circle_boundary(), 4)
    tree_b = build_uniform_tree(circle_boundary(0.35, tuple(delta)), 4)

    def bump(x, y):
        return np.exp(-(x * x + y * y) / 0.002)

    field_a = Field(sample_leaves(tree_a, bump))
    field_b = Field(sample_leaves(
        tree_b, lambda x, y: bump(x - delta[0], y - delta[1])))
    vol_a = eval_volume_potential(field_a, tree_a, tables=tables)
    vol_b = eval_volume_potential(field_b, tree_b, tables=tables)

    pts_a = leaf_node_points(tree_a)
    keep = np.max(np.abs(pts_a + delta), axis=1) < 0.5
    got_a = eval_at_points(vol_a, tree_a, pts_a[keep])
    got_b = eval_at_points(vol_b, tree_b, pts_a[keep] + delta)
    scale = np.max(np.abs(got_a))
    assert np.max(np.abs(got_a - got_b)) / scale <= 1e-12   # measured 4.3e-19


@pytest.mark.skipif(
    "compiled" not in available_backends(),
    reason="compiled kernels not built")
def test_backend_parity(uni4, tables):
    tree, field, vol = uni4
    alt = eval_volume_potential(field, tree, tables=tables, backend="python")
    assert np.max(np.abs(alt.values - vol.values)) <= 1e-14   # measured 6.5e-19


# -- point evaluation -------------------------------------------------------


def test_eval_at_points_node_exact(uni4):
    tree, _, vol = uni4
    nodes = leaf_node_points(tree).reshape(len(tree.leaves), 8, 8, 2)
    li, iy, ix = 37, 2, 5
    got = eval_at_points(vol, tree, nodes[li, iy, ix][None])[0]
    assert abs(got - vol.values[li, iy, ix]) <= 1e-13


def test_eval_outside_root_raises(uni4):
    tree, _, vol = uni4
    with pytest.raises(TreeError):
        eval_at_points(vol, tree, [(0.7, 0.0)])


# -- physics oracles --------------------------------------------------------


def test_laplacian_consistency(tables):
    # five-point Laplacian of the potential recovers the density; the
    # tight spacing sits on the eps/d^2 cancellation floor of double
    # precision evaluation, the looser one is genuinely sharp
    tree = build_uniform_tree(circle_boundary(), 5)
    field = Field(sample_leaves(tree, smooth_fn))
    vol = eval_volume_potential(field, tree, tables=tables)

    def fd_lap(c, d):
        pts = np.array([c, c + (d, 0), c - (d, 0), c + (0, d), c - (0, d)])
        v = eval_at_points(vol, tree, pts)
        return (v[1:].sum() - 4.0 * v[0]) / (d * d)

    for li in (200, 601):
        c = tree.centers[li]
        f_c = smooth_fn(c[0], c[1])
        d = 1e-3 * tree.sides[li]
        assert abs(fd_lap(c, d) - f_c) <= 1e-6    # measured 1.9e-8
        d = 1e-4 * tree.sides[li]
        assert abs(fd_lap(c, d) - f_c) <= 1e-4    # measured 1.9e-6


def test_gaussian_against_radial_oracle(tables):
    # exp(-r^2/beta) with beta = 1e-3 needs level 6 before the leaf
    # interpolants resolve it; the closed-form radial solution then has
    # to match everywhere, and the mass must equal pi * beta
    beta = 1e-3
    tree = build_uniform_tree(circle_boundary(), 6)
    field = Field(sample_leaves(
        tree, lambda x, y: np.exp(-(x * x + y * y) / beta)))
    vol = eval_volume_potential(field, tree, tables=tables)

    pts = leaf_node_points(tree)
    exact = radial_gaussian_potential(np.hypot(pts[:, 0], pts[:, 1]), beta)
    exact = exact.reshape(vol.values.shape)
    scale = np.max(np.abs(exact))
    assert np.max(np.abs(vol.values - exact)) / scale <= 1e-10  # measured 3.5e-11
    assert abs(vol.mass - math.pi * beta) / (math.pi * beta) <= 1e-10


def test_radial_gaussian_limits():
    beta = 1e-3
    v0 = float(radial_gaussian_potential(0.0, beta))
    assert abs(v0 - 0.25 * beta * (math.log(beta) - 0.5772156649015329)) <= 1e-18
    # continuity across the small-argument switch
    lo = float(radial_gaussian_potential(1e-7 * math.sqrt(beta), beta))
    hi = float(radial_gaussian_potential(2e-6 * math.sqrt(beta), beta))
    assert abs(lo - v0) <= 1e-12 * abs(v0)
    assert abs(hi - v0) <= 1e-10 * abs(v0)
    # far field carries exactly the total mass pi * beta
    v_far = float(radial_gaussian_potential(10.0, beta))
    assert abs(v_far - 0.5 * beta * math.log(10.0)) <= 1e-17
