"""Smooth extension of the source across cut cells.

A cut cell S sits at the center of its 3x-side patch Sbar.  Values of f
are known at in-domain stencil points (the cell's own 8x8 grid and a
12x12 grid on the patch); the extension produces values at the
out-of-domain points so every leaf carries a spectrally smooth field.

The workhorse is a *universal matrix*: with Gaussian RBF centers G
fixed on the reference patch [-1,1]^2, A = Phi_{P,G} Phi_{G,G}^{-1}
maps values-at-G to values-at-P for the near-flat interpolant.  Phi_GG
is astronomically ill-conditioned at shape parameter 1e-5 (smallest
eigenvalue near 1e-100), so A is computed once in extended precision
and cached; at run time only a well-conditioned least-squares fit of
the in-domain rows remains.  In the flat limit the interpolant
reproduces total degree 10, which 66 support nodes parametrize exactly.

An alternative ray-cast backend extrapolates f along radial rays for
star-shaped boundaries; it exists to cross-check the matrix route.
"""
import hashlib
import math

import numpy as np
import scipy.linalg

from . import cache
from .chebyshev import eval_cheb2d, grid2d, nodes_on_square, truncate_total_order, vals_to_coeffs2d
from .errors import DataStarvedError, DegenerateCutError, ExtensionError, PrecisionError
from .quadtree import GRAZE_TOL, K_LEAF

EPS_SHAPE = 1e-5
MP_BITS = 768
N_SUPPORT = 66
K_BAR = 12
VALIDATE_TOL = 1e-12
LSTSQ_COND = 1e-12
REFINE_STEPS = 2
FIT_RTOL = 1e-11

# blocks of the 274-point constellation P, in stencil order
SL_S = slice(0, 64)
SL_SBAR = slice(64, 208)
SL_G = slice(208, 274)


def build_support_nodes() -> np.ndarray:
    """66 Gaussian centers on [-1,1]^2: 12 rows alternating 6 and 5 nodes.

    Strict alternation (6,5,6,5,...) is deliberate: the y-mirror
    symmetric variant puts all 66 nodes on a common degree-10 algebraic
    curve and total-degree-10 interpolation degenerates.  This layout
    has Vandermonde condition ~1e2 and minimum separation 0.27.
    """
    ys = -1.0 + 2.0 * np.arange(12) / 11.0
    pts = []
    for j, y in enumerate(ys):
        if j % 2 == 0:
            xs = np.linspace(-1.0, 1.0, 6)
        else:
            xs = np.linspace(-0.8, 0.8, 5)
        pts.extend((x, y) for x in xs)
    return np.array(pts)


class ReferenceStencil:
    """Fixed reference point set P = [X_S | X_Sbar | G] on the unit patch.

    X_S: the cut cell's own 8x8 Chebyshev grid (cell = central third of
    the patch, so it spans [-1/3, 1/3]^2 in patch coordinates).
    X_Sbar: 12x12 Chebyshev grid on the whole patch.  G: support nodes.
    """

    def __init__(self):
        self.xs = grid2d(K_LEAF) / 3.0
        self.xsbar = grid2d(K_BAR)
        self.g = build_support_nodes()
        self.all_points = np.vstack([self.xs, self.xsbar, self.g])
        self.sl_s = slice(0, 64)
        self.sl_sbar = slice(64, 64 + 144)
        self.sl_g = slice(64 + 144, 64 + 144 + N_SUPPORT)

    def sha(self) -> str:
        return hashlib.sha256(np.round(self.all_points, 15).tobytes()).hexdigest()[:16]


def _compute_matrix_mp(stencil: ReferenceStencil, eps: float, bits: int) -> np.ndarray:
    from mpmath import mp

    g = stencil.g
    p = stencil.all_points
    with mp.workprec(bits):
        eps2 = mp.mpf(eps) ** 2

        def phi(ax, ay, bx, by):
            # r^2 must be formed in extended precision: the degree-k
            # block of the kernel lives at scale (eps^2 r^2)^k, far
            # below double rounding of r^2 already for k >= 3
            r2 = (mp.mpf(ax) - mp.mpf(bx)) ** 2 + (mp.mpf(ay) - mp.mpf(by)) ** 2
            return mp.exp(-eps2 * r2)

        phi_gg = mp.matrix(N_SUPPORT, N_SUPPORT)
        for i in range(N_SUPPORT):
            for j in range(N_SUPPORT):
                phi_gg[i, j] = phi(g[i, 0], g[i, 1], g[j, 0], g[j, 1])
        phi_pg = mp.matrix(len(p), N_SUPPORT)
        for i in range(len(p)):
            for j in range(N_SUPPORT):
                phi_pg[i, j] = phi(p[i, 0], p[i, 1], g[j, 0], g[j, 1])
        a = phi_pg * phi_gg**-1
        # hi/lo split: double rounding of the entries alone perturbs a
        # least-squares fit by ~u/sigma_min ~ 5e-9, so the remainder is
        # kept and folded back in at long-double precision
        hi = np.array([[float(a[i, j]) for j in range(N_SUPPORT)] for i in range(len(p))])
        lo = np.array([[float(a[i, j] - hi[i, j]) for j in range(N_SUPPORT)]
                       for i in range(len(p))])
    return hi, lo


class UniversalExtensionMatrix:
    def __init__(self, matrix, matrix_lo, stencil, eps, bits):
        self.matrix = matrix
        self.matrix_lo = matrix_lo
        # long-double view used for residual refinement of the fits
        self.matrix_ld = matrix.astype(np.longdouble) + matrix_lo.astype(np.longdouble)
        self.stencil = stencil
        self.eps = eps
        self.bits = bits

    @property
    def rows_s(self):
        return self.matrix[self.stencil.sl_s]

    @property
    def rows_sbar(self):
        return self.matrix[self.stencil.sl_sbar]


def build_universal_matrix(eps: float = EPS_SHAPE, bits: int = MP_BITS,
                           use_cache: bool = True) -> UniversalExtensionMatrix:
    """Build (or load) the extension matrix, validated by precision doubling.

    The matrix at `bits` must agree with the 2x-precision rebuild to
    1e-12 in max norm; one escalation to 4x is attempted before raising
    PrecisionError.
    """
    stencil = ReferenceStencil()
    meta = {"kind": "universal-extension", "eps": eps, "bits": bits,
            "stencil": stencil.sha(), "version": 2}
    if use_cache:
        hit = cache.load_arrays("universal_matrix", meta)
        if hit is not None:
            return UniversalExtensionMatrix(hit["matrix"], hit["matrix_lo"],
                                            stencil, eps, bits)
    hi1, lo1 = _compute_matrix_mp(stencil, eps, bits)
    hi2, lo2 = _compute_matrix_mp(stencil, eps, 2 * bits)
    if np.max(np.abs(hi1 - hi2)) > VALIDATE_TOL:
        hi4, lo4 = _compute_matrix_mp(stencil, eps, 4 * bits)
        if np.max(np.abs(hi2 - hi4)) > VALIDATE_TOL:
            raise PrecisionError("extension: universal matrix failed precision-doubling validation")
        hi2, lo2 = hi4, lo4
    if use_cache:
        cache.save_arrays("universal_matrix", {"matrix": hi2, "matrix_lo": lo2}, meta)
    return UniversalExtensionMatrix(hi2, lo2, stencil, eps, bits)


class _gelsy_solver:
    """Column-pivoted least-squares apply with the strict rank cutoff."""

    def __init__(self, ai):
        self.ai = ai
        probe = np.zeros(ai.shape[0])
        _, _, self.rank, _ = scipy.linalg.lstsq(ai, probe, cond=LSTSQ_COND,
                                                lapack_driver="gelsy")

    def __call__(self, b):
        return scipy.linalg.lstsq(self.ai, b, cond=LSTSQ_COND,
                                  lapack_driver="gelsy")[0]


class _discrepancy_solver:
    """Truncated-SVD apply keeping the fewest directions that represent b.

    Walks the singular spectrum from a coarse cutoff downward and stops
    at the first truncation whose residual is below FIT_RTOL * scale.
    Near-singular cut-cell blocks are slightly inconsistent with smooth
    data (the basis reproduces polynomials only to its flat-limit
    deviation), and inverting the trailing singular values buys no
    fidelity while sending the out-of-domain values wild; stopping at
    the discrepancy level is what keeps starved and sliver cells tame.
    """

    _LADDER = (1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12)

    def __init__(self, ai, b, scale):
        self.u, self.s, self.vt = scipy.linalg.svd(ai, full_matrices=False)
        smax = self.s[0] if len(self.s) else 0.0
        beta = self.u.T @ b
        tol = FIT_RTOL * scale
        self.k = np.count_nonzero(self.s > LSTSQ_COND * smax)
        for tau in self._LADDER:
            k = int(np.count_nonzero(self.s >= tau * smax))
            if np.max(np.abs(b - self.u[:, :k] @ beta[:k]), initial=0.0) <= tol:
                self.k = k
                break

    def __call__(self, b):
        k = self.k
        return self.vt[:k].T @ ((self.u[:, :k].T @ b) / self.s[:k])


def extend_cut_square(umatrix: UniversalExtensionMatrix,
                      f_p: np.ndarray, mask_p: np.ndarray, *,
                      allow_underdetermined: bool = False):
    """Patch Chebyshev coefficients of the extended source for one cut cell.

    f_p / mask_p run over the full 274-point constellation P in stencil
    order [cell 8x8 | patch 12x12 | support nodes]; only entries where
    the mask is True are read.  Fits support-node values to the in-domain
    samples, then fills the patch grid (in-domain nodes keep their data,
    the rest get fitted values).  Returns (coeffs, residual): a (12,12)
    coefficient block total-order truncated below 12, and the max
    interior misfit |A v - f| over the sample rows.

    Raises DataStarvedError with fewer in-domain samples than support
    nodes and DegenerateCutError when the samples cannot pin the fit
    down.  Corner-grazing cut cells whose patch is mostly out of domain
    can legitimately fall below 66 samples at any refinement level, so
    tree-level assembly passes allow_underdetermined=True: that accepts
    the fit whenever it represents the data (judged by the returned
    residual) and breaks ties toward the sample mean, which keeps
    constants exact and the extrapolated values tame.  The default
    keeps the strict contract.
    """
    a = umatrix.matrix
    mask_p = np.asarray(mask_p, dtype=bool)
    rows = np.flatnonzero(mask_p)
    if len(rows) < N_SUPPORT and not allow_underdetermined:
        raise DataStarvedError(
            f"extension: cut cell has {len(rows)} in-domain samples, needs {N_SUPPORT}")
    rhs = np.asarray(f_p, dtype=float)[rows]
    ai = a[rows]
    shift = 0.0
    b = rhs
    if not allow_underdetermined:
        solve = _gelsy_solver(ai)
        rank = solve.rank
        if rank < N_SUPPORT - 2:
            raise DegenerateCutError(
                f"extension: cut-cell fit rank {rank} of {N_SUPPORT}, stencil degenerate")
    else:
        # fit the deviation from the sample mean: the truncated solution
        # then reproduces constants exactly instead of going wild at
        # out-of-domain nodes
        shift = float(rhs.mean()) if len(rows) else 0.0
        b = rhs - shift * (a @ np.ones(N_SUPPORT))[rows]
        solve = _discrepancy_solver(ai, b, float(np.max(np.abs(rhs), initial=0.0)))
    v = solve(b)
    # residual refinement in long double: the fit block has kappa ~ 1e9,
    # so plain double stalls around 1e-8 in the recovered values
    ai_ld = umatrix.matrix_ld[rows]
    b_ld = b.astype(np.longdouble)
    v_ld = v.astype(np.longdouble)
    for _ in range(REFINE_STEPS):
        r = b_ld - ai_ld @ v_ld
        v_ld = v_ld + solve(np.asarray(r, dtype=float))
    v = np.asarray(v_ld, dtype=float) + shift
    residual = float(np.max(np.abs(ai @ v - rhs))) if len(rows) else 0.0
    mask_sbar = mask_p[SL_SBAR]
    f_sbar = np.asarray(f_p, dtype=float)[SL_SBAR]
    filled = np.where(mask_sbar, f_sbar, umatrix.rows_sbar @ v)
    coeffs = vals_to_coeffs2d(filled.reshape(K_BAR, K_BAR))
    return truncate_total_order(coeffs, K_BAR), residual


# -- whole-tree extension --------------------------------------------------


class ExtendedField:
    """Extended source over the tree: per-leaf 8x8 grids plus fit metadata.

    values[i] is zero on exterior leaves outside every extension list.
    sbar_coeffs maps cut leaf index to its (12,12) patch coefficient
    block; fit_residual is the worst interior misfit over cut cells;
    writers records which cut leaf wrote each extension-list member
    (each leaf is written exactly once).
    """

    def __init__(self, values, sbar_coeffs, fit_residual, writers):
        self.values = values
        self.sbar_coeffs = sbar_coeffs
        self.fit_residual = fit_residual
        self.writers = writers


def _cut_cell_data(tree, f, stencil, targets):
    """In-domain masks and f-values over each cut leaf's 274 stencil points."""
    if len(targets) == 0:
        return {}
    ref = stencil.all_points
    pts = np.concatenate([
        tree.leaves[ci].center + 1.5 * tree.leaves[ci].side * ref
        for ci in targets
    ])
    inside = tree.boundary.contains_robust(pts)
    vals = np.zeros(len(pts))
    vals[inside] = f(pts[inside])
    out = {}
    n = len(ref)
    for row, ci in enumerate(targets):
        sl = slice(row * n, (row + 1) * n)
        out[int(ci)] = (inside[sl], vals[sl])
    return out


def extend_all(tree, f, umatrix=None, method: str = "matrix") -> ExtendedField:
    """Evaluate the extended source on every leaf's 8x8 grid.

    Interior leaves sample f directly.  Cut leaves and their assigned
    exterior members evaluate the extension ("matrix" or "ray" method);
    unassigned exterior leaves are zero.
    """
    nleaf = len(tree.leaves)
    vals = np.zeros((nleaf, K_LEAF, K_LEAF))
    writers = {}
    ints = tree.interior_indices
    if len(ints):
        pts = np.concatenate([tree.leaf_nodes(i) for i in ints])
        vals[ints] = np.asarray(f(pts), dtype=float).reshape(len(ints), K_LEAF, K_LEAF)
        writers.update((int(i), int(i)) for i in ints)
    field = ExtendedField(vals, {}, 0.0, writers)
    if len(tree.cut_indices) == 0:
        return field

    if method == "ray":
        ray_fail = _field_ray(tree, f, field)
        if ray_fail:
            if umatrix is None:
                umatrix = build_universal_matrix()
            _field_matrix(tree, f, field, umatrix, only=ray_fail)
        return field
    if method != "matrix":
        raise ValueError(f"extension: unknown method {method!r}")
    if umatrix is None:
        umatrix = build_universal_matrix()
    _field_matrix(tree, f, field, umatrix)
    return field


def field_from_function(tree, f, umatrix=None, method: str = "matrix") -> np.ndarray:
    """Per-leaf grids of the extended source; see extend_all."""
    return extend_all(tree, f, umatrix, method).values


def _field_matrix(tree, f, field, umatrix, only=None):
    targets = tree.cut_indices if only is None else only
    data = _cut_cell_data(tree, f, umatrix.stencil, targets)
    for ci in targets:
        ci = int(ci)
        leaf = tree.leaves[ci]
        mask_p, f_p = data[ci]
        coeffs, res = extend_cut_square(umatrix, f_p, mask_p,
                                        allow_underdetermined=True)
        field.sbar_coeffs[ci] = coeffs
        field.fit_residual = max(field.fit_residual, res)
        side3 = 3 * leaf.side
        own = tree.leaf_nodes(ci)
        field.values[ci] = eval_cheb2d(coeffs, own, center=leaf.center,
                                       side=side3).reshape(K_LEAF, K_LEAF)
        _record_writer(field.writers, ci, ci)
        for mi in tree.ext_members.get(ci, []):
            mpts = tree.leaf_nodes(mi)
            field.values[mi] = eval_cheb2d(coeffs, mpts, center=leaf.center,
                                           side=side3).reshape(K_LEAF, K_LEAF)
            _record_writer(field.writers, int(mi), ci)


def _record_writer(writers, target, owner):
    prev = writers.setdefault(target, owner)
    if prev != owner:
        raise ExtensionError(
            f"extension: leaf {target} written by both {prev} and {owner}")


# -- ray-cast backend --------------------------------------------------------

RAY_POINTS = 8  # degree-7 polynomial extrapolation along the ray


def _radial_profile(boundary):
    """(center, rho(theta)) of a single star-shaped component, else None."""
    if len(boundary.components) != 1:
        return None
    comp = boundary.components[0]
    curve = comp.curve
    from .geometry import _FourierPolarCurve, _StarfishCurve
    if isinstance(curve, _FourierPolarCurve):
        return curve.center, lambda th: curve._radius(th, 0)
    if isinstance(curve, _StarfishCurve):
        r, a, n = curve.radius, curve.amplitude, curve.arms
        return curve.center, lambda th: r * (1.0 + a * np.cos(n * th))
    return None


def _field_ray(tree, f, field):
    """Fill cut leaves and members by radial extrapolation.

    Returns the list of cut leaf indices that must fall back to the
    matrix route (no radial profile, or a sample fell out of domain).
    """
    prof = _radial_profile(tree.boundary)
    if prof is None:
        return [int(ci) for ci in tree.cut_indices]
    center, rho = prof
    cx, cy = center.real, center.imag
    fails = []
    for ci in tree.cut_indices:
        ci = int(ci)
        leaf = tree.leaves[ci]
        mask_s = tree.node_masks[ci]
        own = tree.leaf_nodes(ci)
        block = np.zeros(len(own))
        block[mask_s] = f(own[mask_s])
        jobs = [(own[~mask_s], None)]
        for mi in tree.ext_members.get(ci, []):
            jobs.append((tree.leaf_nodes(mi), int(mi)))
        ok = True
        results = []
        for pts, tag in jobs:
            if len(pts) == 0:
                results.append((np.zeros(0), tag))
                continue
            ext = _ray_extrapolate(tree.boundary, cx, cy, rho, pts, leaf.side, f)
            if ext is None:
                ok = False
                break
            results.append((ext, tag))
        if not ok:
            fails.append(ci)
            continue
        block[~mask_s] = results[0][0]
        field.values[ci] = block.reshape(K_LEAF, K_LEAF)
        _record_writer(field.writers, ci, ci)
        for ext, tag in results[1:]:
            field.values[tag] = ext.reshape(K_LEAF, K_LEAF)
            _record_writer(field.writers, tag, ci)
    return fails


def _ray_extrapolate(boundary, cx, cy, rho, pts, cell_side, f):
    """Degree-7 extrapolation of f along center rays to each point.

    Samples sit at uniform radial offsets j*L/8 (j=1..8) inside the
    crossing point.  Returns None when any sample leaves the domain
    (hole in the way, profile invalid); the caller then falls back.
    """
    theta = np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx)
    r_pt = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    r_cross = rho(theta)
    h = cell_side / RAY_POINTS
    j = np.arange(1, RAY_POINTS + 1)
    r_smp = r_cross[:, None] - h * j[None, :]
    if np.any(r_smp <= 0):
        return None
    sx = cx + r_smp * np.cos(theta)[:, None]
    sy = cy + r_smp * np.sin(theta)[:, None]
    smp = np.column_stack([sx.ravel(), sy.ravel()])
    if not boundary.contains(smp).all():
        return None
    fv = np.asarray(f(smp), dtype=float).reshape(len(pts), RAY_POINTS)
    # uniform-grid barycentric weights (-1)^j C(7, j-1) at t_j = j
    w = np.array([(-1.0) ** k * math.comb(RAY_POINTS - 1, k) for k in range(RAY_POINTS)])
    t = (r_cross - r_pt) / h  # extrapolation coordinate, t < 1 outside
    d = t[:, None] - j[None, :]
    if np.any(np.abs(d) < 1e-12):
        d = np.where(np.abs(d) < 1e-12, 1e-12, d)
    num = np.sum(w[None, :] * fv / d, axis=1)
    den = np.sum(w[None, :] / d, axis=1)
    return num / den
