"""Volume potential of the extended source over the quad tree.

The potential of the piecewise-Chebyshev density is split per target
leaf into a near part and a far part.  Near sources are the touching
boxes (self, colleagues, coarse and fine neighbors; nothing else can
touch under 2:1 balance): their weakly singular integrals come from
tables of basis integrals precomputed once on the reference square and
rescaled by

    V_L = (L/2)^2 [ I_mn(x') + log(L/2)/(2pi) * J_mn ],

which follows from log|s x| = log|x| + log s.  Far sources are handled
by scaled multipole expansions gathered up the tree; the traversal
accepts a box B when the gap to the target box is at least one side of
B, which caps the expansion ratio at sqrt(2)/3 ~ 0.4714 so the default
order 40 reaches ~1e-13.  A coarse leaf that fails the gap test without
touching (the classic "parent colleague" box) is split on the fly into
virtual children carrying the same interpolant, which restores the gap
guarantee without any local expansions.
"""
import numpy as np

from . import cache
from .chebyshev import eval_cheb2d, grid2d, vals_to_coeffs2d
from .errors import PrecisionError, TreeError
from .kernels import get_backend
from .quadrature import gauss_legendre, integrate_log_kernel

K_LEAF = 8
N_BASIS = K_LEAF * K_LEAF
P_DEFAULT = 40
EPS_FMM_DEFAULT = 0.5e-11
TABLE_GL = 20
TABLE_TOL = 1e-13
_RATIO = np.sqrt(2.0) / 3.0  # worst |h/(z-c)| the traversal can accept


def order_for_tolerance(eps: float) -> int:
    """Expansion order with truncation factor _RATIO^p below eps."""
    p = int(np.ceil(np.log(max(eps, 1e-16)) / np.log(_RATIO))) + 2
    return max(8, min(p, 60))


# -- near-field tables -------------------------------------------------------


def _config_layout():
    """All (dlev, 2*offset) near configurations allowed by 2:1 balance.

    dlev = target level - source level.  Offsets are measured from the
    source center in units of its half-side; doubling makes them exact
    integers.  Target nodes are returned in source reference coords.
    """
    grid = grid2d(K_LEAF)
    configs = []
    for ox in (-4, 0, 4):          # same level: self + 8 colleagues
        for oy in (-4, 0, 4):
            pts = 0.5 * np.array([ox, oy]) + grid
            configs.append(((0, ox, oy), pts))
    ring = [-3, -1, 1, 3]
    for ox in ring:                # target one level finer, half size
        for oy in ring:
            if max(abs(ox), abs(oy)) != 3:
                continue
            pts = 0.5 * np.array([ox, oy]) + 0.5 * grid
            configs.append(((1, ox, oy), pts))
    for ox in [2 * r for r in ring]:   # target one level coarser, double size
        for oy in [2 * r for r in ring]:
            if max(abs(ox), abs(oy)) != 6:
                continue
            pts = 0.5 * np.array([ox, oy]) + 2.0 * grid
            configs.append(((-1, ox, oy), pts))
    return configs


def _basis_values(pts: np.ndarray) -> np.ndarray:
    """T_i(x) T_j(y) for i, j < K at pts, flattened like coeffs[j, i]."""
    tx = np.polynomial.chebyshev.chebvander(pts[:, 0], K_LEAF - 1)
    ty = np.polynomial.chebyshev.chebvander(pts[:, 1], K_LEAF - 1)
    return (ty[:, :, None] * tx[:, None, :]).reshape(len(pts), N_BASIS)


def _basis_line_integrals() -> np.ndarray:
    # int_{-1}^{1} T_m = 0 (odd m), 2/(1 - m^2) (even m)
    j = np.zeros(K_LEAF)
    for m in range(0, K_LEAF, 2):
        j[m] = 2.0 / (1.0 - m * m)
    return j


class NearFieldTable:
    """Reference-square log-kernel integrals for every touching layout."""

    def __init__(self, keys, table, j_vec, n_gl):
        self.keys = [tuple(k) for k in keys]
        self.table = table            # (ncfg, N_BASIS, 64 targets)
        self.j_vec = j_vec            # (N_BASIS,)
        self.n_gl = n_gl
        self.index = {k: i for i, k in enumerate(self.keys)}


def _build_table_arrays(n_gl: int) -> tuple:
    configs = _config_layout()
    keys = np.array([k for k, _ in configs], dtype=np.int64)
    table = np.empty((len(configs), N_BASIS, N_BASIS))
    rect = (-1.0, 1.0, -1.0, 1.0)
    for c, (_, pts) in enumerate(configs):
        for q in range(len(pts)):
            table[c, :, q] = integrate_log_kernel(pts[q], rect, _basis_values,
                                                  n_gl=n_gl)
    return keys, table


def precompute_near_tables(n_gl: int = TABLE_GL, use_cache: bool = True) -> NearFieldTable:
    """Build (or load) the 33-configuration near-field tables.

    Every entry is cross-checked against a rebuild with a richer panel
    rule; disagreement beyond TABLE_TOL names the offending layout.
    """
    j1 = _basis_line_integrals()
    j_vec = np.outer(j1, j1).reshape(N_BASIS)
    meta = {"kind": "near-log-tables", "k": K_LEAF, "n_gl": n_gl, "version": 1}
    if use_cache:
        hit = cache.load_arrays("near_tables", meta)
        if hit is not None:
            return NearFieldTable(hit["keys"].tolist(), hit["table"], j_vec, n_gl)
    keys, table = _build_table_arrays(n_gl)
    _, check = _build_table_arrays(n_gl + 8)
    err = np.abs(table - check).max(axis=(1, 2))
    if err.max() > TABLE_TOL:
        c = int(err.argmax())
        raise PrecisionError(
            f"volpot: near table config {tuple(keys[c])} unconverged ({err.max():.2e})")
    if use_cache:
        cache.save_arrays("near_tables", {"keys": keys, "table": table}, meta)
    return NearFieldTable(keys.tolist(), table, j_vec, n_gl)


# -- multipole machinery -----------------------------------------------------


_moment_cache: dict = {}


def _moment_matrix(p: int) -> np.ndarray:
    """MOM[k, b]: k-th scaled moment of basis function b on [-1,1]^2.

    s_k = h^2 * MOM @ coeffs, with s_0 the plain mass.  A 24x24
    Gauss-Legendre rule integrates T_i T_j (x+iy)^k exactly for the
    orders in play (per-axis degree <= 47).
    """
    if p in _moment_cache:
        return _moment_cache[p]
    n = max(24, (p + K_LEAF) // 2 + 2)
    t, w = gauss_legendre(n)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    ww = np.outer(w, w).ravel()
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    zb = (pts[:, 0] + 1j * pts[:, 1])
    powers = np.empty((p + 1, len(pts)), dtype=complex)
    powers[0] = 1.0
    for k in range(1, p + 1):
        powers[k] = powers[k - 1] * zb
    basis = _basis_values(pts)
    _moment_cache[p] = (powers * ww) @ basis
    return _moment_cache[p]


class MultipoleExpansion:
    """Outgoing expansion of one box: Re[a0 log(z-c) + sum a_k (z-c)^-k]."""

    def __init__(self, center, order, coeffs):
        self.center = complex(center)
        self.order = int(order)
        self.coeffs = np.asarray(coeffs, dtype=complex)

    def eval(self, z):
        z = np.asarray(z, dtype=complex)
        dz = z - self.center
        out = np.real(self.coeffs[0]) * np.log(np.abs(dz))
        w = 1.0 / dz
        acc = np.zeros_like(dz)
        for k in range(self.order, 0, -1):
            acc = (acc + self.coeffs[k]) * w
        return out + acc.real


def box_multipole(values: np.ndarray, center, side: float,
                  order: int = P_DEFAULT) -> MultipoleExpansion:
    """Expansion of the 8x8 leaf interpolant about the box center."""
    h = 0.5 * side
    mom = _moment_matrix(order) @ vals_to_coeffs2d(np.asarray(values, float)).ravel()
    s = h * h * mom                     # scaled moments, s_0 = mass
    k = np.arange(1, order + 1)
    coeffs = np.empty(order + 1, dtype=complex)
    coeffs[0] = s[0] / (2.0 * np.pi)
    coeffs[1:] = -(s[1:] * h**k / k) / (2.0 * np.pi)
    return MultipoleExpansion(complex(center[0], center[1]), order, coeffs)


def _shift_matrices(p: int):
    """Child->parent scaled-moment translations, indexed by 2*ax + ay.

    (ax, ay) is the child key parity, so the child center sits at the
    parent center plus h_p * (ax - 1/2, ay - 1/2).  Exact for moments
    up to order p.
    """
    binom = np.zeros((p, p))
    for l in range(p):
        binom[l, 0] = 1.0
        for k in range(1, l + 1):
            binom[l, k] = binom[l - 1, k - 1] + binom[l - 1, k]
    mats = []
    for ax in (0, 1):
        for ay in (0, 1):
            d = complex(ax - 0.5, ay - 0.5)   # (child - parent) / h_p
            t = np.zeros((p + 1, p + 1), dtype=complex)
            t[0, 0] = 1.0
            for l in range(1, p + 1):
                t[l, 0] = d**l
                for k in range(1, l + 1):
                    t[l, k] = (l / k) * binom[l - 1, k - 1] * 2.0**-k * d ** (l - k)
            mats.append(t)
    return mats


_child_eval_cache = {}


def _child_eval_matrices():
    """Maps 8x8 leaf values to a child quadrant's 8x8 values (exact)."""
    if "mats" not in _child_eval_cache:
        tc = np.empty((N_BASIS, N_BASIS))
        eye = np.eye(K_LEAF * K_LEAF)
        for b in range(N_BASIS):
            tc[:, b] = vals_to_coeffs2d(eye[:, b].reshape(K_LEAF, K_LEAF)).ravel()
        grid = grid2d(K_LEAF)
        mats = {}
        for ax in (0, 1):
            for ay in (0, 1):
                pts = np.array([ax - 0.5, ay - 0.5]) + 0.5 * grid
                mats[(ax, ay)] = _basis_values(pts) @ tc
        _child_eval_cache["mats"] = mats
        _child_eval_cache["tc"] = tc
    return _child_eval_cache["mats"]


# -- tree-wide evaluation -----------------------------------------------------


INTERNAL = -1


class _NodeTable:
    """Flat view of every tree node (internal and leaf), root first."""

    def __init__(self, tree):
        levels, cxs, cys, leaf_of, children, keys = [], [], [], [], [], []
        stack = [((0, 0, 0), -1, -1)]
        while stack:
            key, parent, slot = stack.pop()
            cls = tree.nodes.get(key)
            if cls is None:
                continue
            nid = len(levels)
            if parent >= 0:
                children[parent][slot] = nid
            lvl, ix, iy = key
            s = 2.0**-lvl
            levels.append(lvl)
            cxs.append(-0.5 + (ix + 0.5) * s)
            cys.append(-0.5 + (iy + 0.5) * s)
            keys.append(key)
            children.append([-1, -1, -1, -1])
            if cls == INTERNAL:
                leaf_of.append(-1)
                for ax in (0, 1):
                    for ay in (0, 1):
                        stack.append(((lvl + 1, 2 * ix + ax, 2 * iy + ay),
                                      nid, 2 * ax + ay))
            else:
                leaf_of.append(tree.leaf_at(key).idx)
        self.level = np.array(levels)
        self.cx = np.array(cxs)
        self.cy = np.array(cys)
        self.h = 0.5 * 2.0**-self.level.astype(float)
        self.leaf_of = np.array(leaf_of)
        self.children = np.array(children)
        self.keys = keys
        self.n = len(levels)


def _upward_pass(nt: _NodeTable, coeffs64: np.ndarray, order: int):
    """Scaled moments [mass, s_1..s_p] for every node, children first."""
    mom = np.zeros((nt.n, order + 1), dtype=complex)
    nonzero = np.zeros(nt.n, dtype=bool)
    mom_mat = _moment_matrix(order)
    is_leaf = nt.leaf_of >= 0
    leaf_rows = np.flatnonzero(is_leaf)
    live = np.abs(coeffs64[nt.leaf_of[leaf_rows]]).max(axis=1) > 0.0
    nonzero[leaf_rows[live]] = True
    rows = leaf_rows[live]
    if len(rows):
        h2 = nt.h[rows] ** 2
        mom[rows] = (coeffs64[nt.leaf_of[rows]] @ mom_mat.T) * h2[:, None]
    shifts = _shift_matrices(order)
    for nid in np.argsort(-nt.level, kind="stable"):
        if is_leaf[nid]:
            continue
        acc = None
        for slot in range(4):
            c = nt.children[nid, slot]
            if c < 0 or not nonzero[c]:
                continue
            term = shifts[slot] @ mom[c]
            acc = term if acc is None else acc + term
        if acc is not None:
            mom[nid] = acc
            nonzero[nid] = True
    return mom, nonzero


def _sup_gap(cx, cy, hh, cx2, cy2, h2):
    gx = abs(cx - cx2) - (hh + h2)
    gy = abs(cy - cy2) - (hh + h2)
    g = gx if gx > gy else gy
    return g if g > 0.0 else 0.0


class _Interactions:
    """Near pair lists per table configuration plus a far CSR pair set."""

    def __init__(self, near, src_ids, src_targets, virt):
        self.near = near                # cfg key -> (t_arr, leaf_arr)
        self.src_ids = src_ids          # source ids with far targets
        self.src_targets = src_targets  # list of target-leaf index arrays
        self.virt = virt                # list of (center, h, vals64) extras


def _collect_interactions(tree, nt: _NodeTable, nonzero, values, table):
    near = {}
    far = {}
    virt = []           # (center complex, h, vals (64,))
    virt_ids = {}       # (leaf_idx, path) -> virtual source id
    cmats = _child_eval_matrices()
    nleaf = len(tree.leaves)
    vals_flat = values.reshape(nleaf, N_BASIS)

    def far_add(sid, t):
        far.setdefault(sid, []).append(t)

    def virtual_split(leaf_idx, center, hh, vals, path, t, tb):
        # split a too-close coarse leaf into exact interpolant children
        for (ax, ay), mat in cmats.items():
            ch = 0.5 * hh
            cc = center + complex((ax - 0.5) * hh, (ay - 0.5) * hh)
            cpath = path + (2 * ax + ay,)
            vid = virt_ids.get((leaf_idx, cpath))
            if vid is None:
                vid = nt.n + len(virt)
                virt_ids[(leaf_idx, cpath)] = vid
                virt.append((cc, ch, mat @ vals))
            gap = _sup_gap(tb[0], tb[1], tb[2], cc.real, cc.imag, ch)
            if gap >= 2.0 * ch:
                far_add(vid, t)
            else:
                virtual_split(leaf_idx, cc, ch, virt[vid - nt.n][2],
                              cpath, t, tb)

    for t, leaf in enumerate(tree.leaves):
        tcx, tcy = leaf.center
        th = 0.5 * leaf.side
        tb = (tcx, tcy, th)
        stack = [0]
        while stack:
            nid = stack.pop()
            if not nonzero[nid]:
                continue
            hh = nt.h[nid]
            gap = _sup_gap(tcx, tcy, th, nt.cx[nid], nt.cy[nid], hh)
            if gap >= 2.0 * hh:
                far_add(nid, t)
                continue
            li = nt.leaf_of[nid]
            if li < 0:
                for c in nt.children[nid]:
                    if c >= 0:
                        stack.append(c)
                continue
            if gap == 0.0:
                dlev = leaf.level - int(nt.level[nid])
                kx = round(2.0 * (tcx - nt.cx[nid]) / hh)
                ky = round(2.0 * (tcy - nt.cy[nid]) / hh)
                near.setdefault((dlev, kx, ky), []).append((t, li))
            else:
                virtual_split(li, complex(nt.cx[nid], nt.cy[nid]), hh,
                              vals_flat[li], (), t, tb)

    near_arr = {}
    for key, pairs in near.items():
        arr = np.asarray(pairs, dtype=np.int64)
        near_arr[key] = (arr[:, 0], arr[:, 1])
    src_ids = np.array(sorted(far), dtype=np.int64)
    src_targets = [np.asarray(far[s], dtype=np.int64) for s in src_ids]
    return _Interactions(near_arr, src_ids, src_targets, virt)


class VolumeField:
    """Potential values on every leaf's 8x8 grid plus the total mass."""

    def __init__(self, values, mass, order):
        self.values = values
        self.mass = float(mass)
        self.order = order
        self._coeffs = None

    def coeffs(self):
        if self._coeffs is None:
            nl = len(self.values)
            c = np.empty((nl, K_LEAF, K_LEAF))
            for i in range(nl):
                c[i] = vals_to_coeffs2d(self.values[i])
            self._coeffs = c
        return self._coeffs


def eval_volume_potential(field, tree, *, tables: NearFieldTable = None,
                          order: int = None, eps: float = EPS_FMM_DEFAULT,
                          backend: str = "auto") -> VolumeField:
    """Potential of the piecewise-interpolant density at all leaf nodes."""
    if tables is None:
        tables = precompute_near_tables()
    if order is None:
        order = max(P_DEFAULT, order_for_tolerance(eps))
    values = np.asarray(field.values, dtype=float)
    nleaf = len(tree.leaves)
    coeffs64 = np.empty((nleaf, N_BASIS))
    for i in range(nleaf):
        coeffs64[i] = vals_to_coeffs2d(values[i]).ravel()

    nt = _NodeTable(tree)
    mom, nonzero = _upward_pass(nt, coeffs64, order)
    inter = _collect_interactions(tree, nt, nonzero, values, tables)

    out = np.zeros((nleaf, N_BASIS))
    halves = 0.5 * tree.sides
    # near part: one batched basis-integral product per configuration
    inv2pi = 1.0 / (2.0 * np.pi)
    for key, (ts, ss) in inter.near.items():
        if key not in tables.index:
            raise TreeError(f"volpot: touching boxes with layout {key}, tree not 2:1 balanced")
        i_cfg = tables.table[tables.index[key]]
        al = coeffs64[ss]
        h = halves[ss]
        contrib = (al @ i_cfg) + (np.log(h) * inv2pi * (al @ tables.j_vec))[:, None]
        out[ts] += h[:, None] ** 2 * contrib

    # far part: multipoles of real nodes plus any virtual split boxes
    nsrc = len(inter.src_ids)
    if nsrc:
        mom_mat = _moment_matrix(order)
        centers = np.empty(nsrc, dtype=complex)
        hs = np.empty(nsrc)
        momrows = np.empty((nsrc, order + 1), dtype=complex)
        for j, sid in enumerate(inter.src_ids):
            if sid < nt.n:
                centers[j] = complex(nt.cx[sid], nt.cy[sid])
                hs[j] = nt.h[sid]
                momrows[j] = mom[sid]
            else:
                cc, ch, vals = inter.virt[sid - nt.n]
                centers[j] = cc
                hs[j] = ch
                tc = _child_eval_cache["tc"]
                momrows[j] = (mom_mat @ (tc @ vals)) * ch * ch
        kdiv = np.arange(1, order + 1)
        mom_div = momrows[:, 1:] / kdiv
        mass = momrows[:, 0].real.copy()
        ptr = np.zeros(nsrc + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(x) for x in inter.src_targets])
        tgt = (np.concatenate(inter.src_targets) if len(inter.src_targets)
               else np.zeros(0, dtype=np.int64))
        g = grid2d(K_LEAF)
        gz = g[:, 0] + 1j * g[:, 1]
        tz = (tree.centers[:, 0] + 1j * tree.centers[:, 1])[:, None] \
            + halves[:, None] * gz[None, :]
        kern = get_backend(backend)
        kern.far_accumulate(out, np.ascontiguousarray(tz), centers, hs, mass,
                            np.ascontiguousarray(mom_div), ptr, tgt)

    total = mom[0, 0].real if nonzero[0] else 0.0
    return VolumeField(out.reshape(nleaf, K_LEAF, K_LEAF), total, order)


def _locate_leaf(tree, x, y):
    if not (-0.5 <= x <= 0.5 and -0.5 <= y <= 0.5):
        raise TreeError(f"volpot: target ({x}, {y}) outside the root square")
    key = (0, 0, 0)
    while tree.nodes.get(key) == INTERNAL:
        lvl, ix, iy = key
        s = 2.0**-lvl
        cx = -0.5 + (ix + 0.5) * s
        cy = -0.5 + (iy + 0.5) * s
        key = (lvl + 1, 2 * ix + (x >= cx), 2 * iy + (y >= cy))
    leaf = tree.leaf_at(key)
    if leaf is None:
        raise TreeError("volpot: malformed tree, missing leaf")
    return leaf.idx


def eval_at_points(volfield: VolumeField, tree, targets) -> np.ndarray:
    """Interpolate the stored potential at arbitrary root-square points."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    idx = np.array([_locate_leaf(tree, x, y) for x, y in targets])
    out = np.empty(len(targets))
    coeffs = volfield.coeffs()
    for li in np.unique(idx):
        sel = idx == li
        leaf = tree.leaves[li]
        out[sel] = eval_cheb2d(coeffs[li], targets[sel],
                               center=leaf.center, side=leaf.side)
    return out


def direct_volume_oracle(field, tree, target) -> float:
    """Brute-force potential of the same piecewise density (tests only)."""
    target = np.asarray(target, dtype=float)
    values = np.asarray(field.values, dtype=float)
    total = 0.0
    for i, leaf in enumerate(tree.leaves):
        if not np.any(values[i]):
            continue
        co = vals_to_coeffs2d(values[i])
        cx, cy = leaf.center
        h = 0.5 * leaf.side
        rect = (cx - h, cx + h, cy - h, cy + h)

        def smooth(pts, co=co, c=leaf.center, s=leaf.side):
            # clip the integrator's shape probe (taken at the target,
            # possibly outside this leaf) back into the box
            lo = np.asarray(c) - 0.5 * s
            return eval_cheb2d(co, np.clip(pts, lo, lo + s), center=c, side=s)

        total += float(integrate_log_kernel(target, rect, smooth))
    return total


_EULER = 0.5772156649015329


def radial_gaussian_potential(r, beta: float):
    """Free-space potential of exp(-|x|^2 / beta), radial closed form.

    V(r) = log r * int_0^r f s ds + int_r^inf f log(s) s ds, evaluated
    with the exponential integral; the r -> 0 limit is (beta/4)(log beta
    - gamma).
    """
    from scipy.special import exp1

    r = np.asarray(r, dtype=float)
    a = r * r / beta
    small = a < 1e-12
    asafe = np.where(small, 1.0, a)
    core = np.where(
        small,
        -_EULER + a * (1.0 - np.log(np.maximum(a, 1e-300))),
        np.exp(-asafe) * np.log(asafe) + exp1(asafe),
    )
    ring = 0.5 * beta * (-np.expm1(-a)) * np.log(np.maximum(r, 1e-300))
    return ring + 0.25 * beta * (np.log(beta) * np.exp(-a) + core)

