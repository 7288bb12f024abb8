"""Adaptive quad tree over the unit box [-0.5, 0.5]^2.

Leaves carry 8x8 Chebyshev grids.  A leaf is CUT when the boundary
passes through it (detected from dense curve samples), INTERIOR when
its center lies in the solution domain and EXTERIOR otherwise.  Cut
boxes refine until their side is commensurate with the local boundary
panel size (or an explicit cut_scale); interior boxes refine until the
Chebyshev tail of the source is below tol_source.  The final tree is
2:1 balanced including corner neighbors, and every non-interior leaf
overlapping the 3x-side extension patch of a cut leaf is at least as
deep as that cut leaf, so extension patches tile exactly into leaf
cells.  Each fully-exterior leaf inside at least one patch is assigned
to its nearest cut cell, whose extended source it will sample.
"""
import json
import numpy as np

from .chebyshev import nodes_on_square, vals_to_coeffs2d
from .errors import TreeError
from .geometry import BoundarySet

INTERIOR, EXTERIOR, CUT = 1, 0, 2
INTERNAL = -1

_CLASS_NAMES = {INTERIOR: "interior", EXTERIOR: "exterior", CUT: "cut"}

K_LEAF = 8
GRAZE_TOL = 1e-12


def box_center(level: int, ix: int, iy: int):
    s = 2.0 ** (-level)
    return (-0.5 + (ix + 0.5) * s, -0.5 + (iy + 0.5) * s)


def box_side(level: int) -> float:
    return 2.0 ** (-level)


def _morton(ix: int, iy: int) -> int:
    m = 0
    for b in range(22):
        m |= ((ix >> b) & 1) << (2 * b) | ((iy >> b) & 1) << (2 * b + 1)
    return m


class _CutDetector:
    """Maps dyadic cells to boundary intersection data from curve samples.

    Samples are spaced at most 0.2 box sides apart at the queried level
    (and at least 8x the quadrature node density), so any arc invading a
    cell deeper than half that spacing lands a sample in it.  Chebyshev
    nodes sit >= 0.0096 box sides away from the cell edge, hence no
    undetected sliver can reach a node of a neighboring cell.
    """

    def __init__(self, boundary: BoundarySet):
        self.boundary = boundary
        self._maps = {}

    def _samples(self, level):
        spacing = 0.2 * box_side(level)
        zs, arcs = [], []
        for c in self.boundary.components:
            for p in range(c.n_panels):
                arc = c.panel_arc[p]
                n = max(8 * 16, int(np.ceil(arc / spacing)) + 1)
                t = np.linspace(c.breaks[p], c.breaks[p + 1], n, endpoint=False)
                zs.append(c.curve.z(t))
                arcs.append(np.full(n, arc))
        return np.concatenate(zs), np.concatenate(arcs)

    def cell_map(self, level):
        """dict (ix, iy) -> min intersecting panel arc at this level."""
        if level not in self._maps:
            z, arcs = self._samples(level)
            x, y = z.real, z.imag
            if np.any((np.abs(x) > 0.5) | (np.abs(y) > 0.5)):
                raise TreeError("tree: boundary leaves the unit box")
            n = 1 << level
            ix = np.minimum(((x + 0.5) * n).astype(int), n - 1)
            iy = np.minimum(((y + 0.5) * n).astype(int), n - 1)
            m = {}
            for i, j, a in zip(ix, iy, arcs):
                key = (int(i), int(j))
                if a < m.get(key, np.inf):
                    m[key] = a
            self._maps[level] = m
        return self._maps[level]


class Leaf:
    __slots__ = ("level", "ix", "iy", "cls", "idx", "ext_owner")

    def __init__(self, level, ix, iy, cls, idx):
        self.level = level
        self.ix = ix
        self.iy = iy
        self.cls = cls
        self.idx = idx
        self.ext_owner = -1

    @property
    def key(self):
        return (self.level, self.ix, self.iy)

    @property
    def center(self):
        return box_center(self.level, self.ix, self.iy)

    @property
    def side(self):
        return box_side(self.level)


class QuadTree:
    """Finished tree: leaf arrays, cut masks, extension assignments."""

    def __init__(self, boundary, leaves, nodes):
        self.boundary = boundary
        self.leaves = leaves
        self.nodes = nodes  # key -> INTERNAL or leaf class
        self._index = {leaf.key: leaf.idx for leaf in leaves}
        self.levels = np.array([l.level for l in leaves])
        self.cls = np.array([l.cls for l in leaves])
        self.centers = np.array([l.center for l in leaves])
        self.sides = box_side(self.levels)
        self.cut_indices = np.flatnonzero(self.cls == CUT)
        self.interior_indices = np.flatnonzero(self.cls == INTERIOR)
        self.exterior_indices = np.flatnonzero(self.cls == EXTERIOR)
        self.node_masks = {}    # cut leaf idx -> (64,) bool, True = in domain
        self.ext_members = {}   # cut leaf idx -> array of exterior leaf idxs
        self.max_level = int(self.levels.max()) if len(leaves) else 0

    # -- structure queries ----------------------------------------------

    def leaf_at(self, key):
        i = self._index.get(key)
        return None if i is None else self.leaves[i]

    def covering_leaf(self, level, ix, iy):
        """Leaf whose box contains cell (level, ix, iy), or None."""
        while level >= 0:
            st = self.nodes.get((level, ix, iy))
            if st is not None and st != INTERNAL:
                return self.leaves[self._index[(level, ix, iy)]]
            if st is None and level == 0:
                return None
            level, ix, iy = level - 1, ix >> 1, iy >> 1
        return None

    def leaf_descendants(self, level, ix, iy):
        """All leaves inside cell (level, ix, iy); empty if coarser-covered."""
        out = []
        stack = [(level, ix, iy)]
        while stack:
            l, a, b = stack.pop()
            st = self.nodes.get((l, a, b))
            if st is None:
                continue
            if st == INTERNAL:
                stack.extend([(l + 1, 2 * a + da, 2 * b + db)
                              for da in (0, 1) for db in (0, 1)])
            else:
                out.append(self._index[(l, a, b)])
        return out

    def locate(self, pts):
        """Leaf index containing each point (unit-box points only)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty(len(pts), dtype=int)
        for i, (x, y) in enumerate(pts):
            if abs(x) > 0.5 or abs(y) > 0.5:
                raise TreeError("tree: point outside the unit box")
            l, ix, iy = 0, 0, 0
            while self.nodes.get((l, ix, iy)) == INTERNAL:
                l += 1
                n = 1 << l
                ix = min(int((x + 0.5) * n), n - 1)
                iy = min(int((y + 0.5) * n), n - 1)
            out[i] = self._index[(l, ix, iy)]
        return out

    def leaf_nodes(self, idx):
        """Physical 8x8 Chebyshev points of leaf idx, shape (64, 2)."""
        leaf = self.leaves[idx]
        return nodes_on_square(leaf.center, leaf.side, K_LEAF)

    def counts(self):
        return {name: int(np.sum(self.cls == v)) for v, name in _CLASS_NAMES.items()}

    def to_json(self) -> str:
        recs = []
        for leaf in self.leaves:
            recs.append({
                "level": leaf.level, "ix": leaf.ix, "iy": leaf.iy,
                "center": list(leaf.center), "side": leaf.side,
                "class": _CLASS_NAMES[leaf.cls], "ext_owner": leaf.ext_owner,
            })
        return json.dumps({"n_leaves": len(recs), "counts": self.counts(),
                           "max_level": self.max_level, "leaves": recs}, indent=1)


def _batch_tail_norms(vals):
    """(tail_l2, total_l2) of the high band over a stack of (n, 8, 8) blocks."""
    from .chebyshev import _transform_matrix
    m = _transform_matrix(K_LEAF)
    coeffs = m @ vals @ m.T
    kx, ky = np.meshgrid(np.arange(K_LEAF), np.arange(K_LEAF), indexing="ij")
    band = (kx + ky) >= K_LEAF - 1
    tail = np.sqrt(np.sum(coeffs[:, band] ** 2, axis=1))
    total = np.sqrt(np.sum(coeffs.reshape(len(coeffs), -1) ** 2, axis=1))
    return tail, total


class _Builder:
    def __init__(self, boundary, f, cut_scale, tol_source, max_level, min_level):
        self.b = boundary
        self.f = f
        self.cut_scale = cut_scale
        self.tol = tol_source
        self.max_level = max_level
        self.min_level = min_level
        self.det = _CutDetector(boundary)
        self.nodes = {}
        self.leaf_keys = {}  # key -> class
        self.f_scale = 0.0   # running max block norm, set from coarse levels first

    def _classify_centers(self, keys):
        if not keys:
            return np.zeros(0, dtype=int)
        pts = np.array([box_center(*k) for k in keys])
        return np.where(self.b.contains(pts), INTERIOR, EXTERIOR)

    def _needs_source_split(self, keys):
        """Chebyshev-tail refinement indicator for interior boxes.

        The tail is measured against the larger of the local block norm
        and the global source scale: a block whose values are noise-level
        relative to the whole source is resolved no matter its shape.
        """
        if self.f is None or not keys:
            return np.zeros(len(keys), dtype=bool)
        pts = np.concatenate([
            nodes_on_square(box_center(*k), box_side(k[0]), K_LEAF) for k in keys
        ])
        vals = np.asarray(self.f(pts), dtype=float).reshape(len(keys), K_LEAF, K_LEAF)
        tail, total = _batch_tail_norms(vals)
        self.f_scale = max(self.f_scale, float(total.max(initial=0.0)))
        denom = np.maximum(total, self.f_scale)
        out = np.zeros(len(keys), dtype=bool)
        nz = denom > 0
        out[nz] = tail[nz] / denom[nz] > self.tol
        return out

    def _cut_stop_side(self, level, min_arc):
        if self.cut_scale is not None:
            return self.cut_scale
        return 2.0 * min_arc

    def initial_refine(self, uniform_level=None):
        if uniform_level is not None:
            n = 1 << uniform_level
            for l in range(uniform_level):
                for ix in range(1 << l):
                    for iy in range(1 << l):
                        self.nodes[(l, ix, iy)] = INTERNAL
            cm = self.det.cell_map(uniform_level)
            keys = [(uniform_level, ix, iy) for ix in range(n) for iy in range(n)]
            noncut = [k for k in keys if (k[1], k[2]) not in cm]
            classes = self._classify_centers(noncut)
            for k in keys:
                self.leaf_keys[k] = CUT if (k[1], k[2]) in cm else None
            for k, c in zip(noncut, classes):
                self.leaf_keys[k] = int(c)
            self.nodes.update(self.leaf_keys)
            return

        pending = [(0, 0, 0)]
        level = 0
        while pending:
            if level > self.max_level:
                raise TreeError("tree: refinement exceeded max_level")
            cm = self.det.cell_map(level)
            cut = [k for k in pending if (k[1], k[2]) in cm]
            noncut = [k for k in pending if (k[1], k[2]) not in cm]
            nxt = []

            for k in cut:
                stop = self._cut_stop_side(level, cm[(k[1], k[2])])
                if (box_side(level) > stop or level < self.min_level) and level < self.max_level:
                    self.nodes[k] = INTERNAL
                    nxt.extend([(level + 1, 2 * k[1] + dx, 2 * k[2] + dy)
                                for dx in (0, 1) for dy in (0, 1)])
                else:
                    self.nodes[k] = CUT
                    self.leaf_keys[k] = CUT

            classes = self._classify_centers(noncut)
            force = [i for i, k in enumerate(noncut) if level < self.min_level]
            interior = [i for i, k in enumerate(noncut)
                        if classes[i] == INTERIOR and i not in force]
            split_flags = np.zeros(len(noncut), dtype=bool)
            split_flags[force] = True
            if level < self.max_level:
                ikeys = [noncut[i] for i in interior]
                needs = self._needs_source_split(ikeys)
                for i, n in zip(interior, needs):
                    split_flags[i] = bool(n)
            for i, k in enumerate(noncut):
                if split_flags[i] and level < self.max_level:
                    self.nodes[k] = INTERNAL
                    nxt.extend([(level + 1, 2 * k[1] + dx, 2 * k[2] + dy)
                                for dx in (0, 1) for dy in (0, 1)])
                else:
                    self.nodes[k] = int(classes[i])
                    self.leaf_keys[k] = int(classes[i])
            pending = nxt
            level += 1

    # -- post passes ------------------------------------------------------

    def _split_leaf(self, key):
        """Replace leaf by 4 children, classifying them; return child keys."""
        cls = self.leaf_keys.pop(key)
        self.nodes[key] = INTERNAL
        l, ix, iy = key
        children = [(l + 1, 2 * ix + dx, 2 * iy + dy) for dx in (0, 1) for dy in (0, 1)]
        if cls in (INTERIOR, EXTERIOR):
            for ck in children:
                self.nodes[ck] = cls
                self.leaf_keys[ck] = cls
        else:
            cm = self.det.cell_map(l + 1)
            noncut = []
            for ck in children:
                if (ck[1], ck[2]) in cm:
                    self.nodes[ck] = CUT
                    self.leaf_keys[ck] = CUT
                else:
                    noncut.append(ck)
            classes = self._classify_centers(noncut)
            for ck, c in zip(noncut, classes):
                self.nodes[ck] = int(c)
                self.leaf_keys[ck] = int(c)
        return children

    def _adjacent_children(self, l, nx, ny, dx, dy):
        xs = [2 * nx] if dx == 1 else [2 * nx + 1] if dx == -1 else [2 * nx, 2 * nx + 1]
        ys = [2 * ny] if dy == 1 else [2 * ny + 1] if dy == -1 else [2 * ny, 2 * ny + 1]
        return [(l + 1, cx, cy) for cx in xs for cy in ys]

    def _balance_violations(self):
        bad = set()
        for key in self.leaf_keys:
            l, ix, iy = key
            n = 1 << l
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    nx, ny = ix + dx, iy + dy
                    if not (0 <= nx < n and 0 <= ny < n):
                        continue
                    if self.nodes.get((l, nx, ny)) != INTERNAL:
                        continue
                    for ck in self._adjacent_children(l, nx, ny, dx, dy):
                        if self.nodes.get(ck) == INTERNAL:
                            bad.add(key)
                            break
        return bad

    def _restriction_violations(self):
        """Coarse non-interior leaves overlapping some cut leaf's patch."""
        bad = set()
        cut_keys = [k for k, c in self.leaf_keys.items() if c == CUT]
        for l, ix, iy in cut_keys:
            n = 1 << l
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nx, ny = ix + dx, iy + dy
                    if not (0 <= nx < n and 0 <= ny < n):
                        continue
                    # walk up from the patch cell to any coarser covering leaf
                    cl, cx, cy = l, nx, ny
                    while cl >= 0:
                        st = self.nodes.get((cl, cx, cy))
                        if st is not None:
                            if st != INTERNAL and st != INTERIOR and cl < l:
                                bad.add((cl, cx, cy))
                            break
                        cl, cx, cy = cl - 1, cx >> 1, cy >> 1
        return bad

    def enforce(self):
        for _ in range(200):
            bad = self._balance_violations() | self._restriction_violations()
            if not bad:
                return
            for key in bad:
                if key in self.leaf_keys:
                    self._split_leaf(key)
        raise TreeError("tree: balance/extension passes did not converge")


def _assign_members(tree: QuadTree):
    """Attach each exterior leaf inside some cut patch to its nearest cut."""
    owner_dist = {}
    for rank, ci in enumerate(tree.cut_indices):
        cut = tree.leaves[ci]
        l, ix, iy = cut.key
        n = 1 << l
        ccenter = np.array(cut.center)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nx, ny = ix + dx, iy + dy
                if not (0 <= nx < n and 0 <= ny < n):
                    continue
                for ei in tree.leaf_descendants(l, nx, ny):
                    leaf = tree.leaves[ei]
                    if leaf.cls != EXTERIOR:
                        continue
                    d = float(np.hypot(*(np.array(leaf.center) - ccenter)))
                    cur = owner_dist.get(ei)
                    # ties go to the later cut cell in (level, morton) order
                    mk = (cut.level, _morton(cut.ix, cut.iy))
                    if cur is None or d < cur[0] - 1e-15 or (abs(d - cur[0]) <= 1e-15 and mk > cur[2]):
                        owner_dist[ei] = (d, int(ci), mk)
    members = {int(ci): [] for ci in tree.cut_indices}
    for ei, (_, ci, _) in owner_dist.items():
        members[ci].append(ei)
        tree.leaves[ei].ext_owner = ci
    for ci in members:
        members[ci] = np.array(sorted(members[ci]), dtype=int)
        tree.leaves[ci].ext_owner = ci
    tree.ext_members = members


def _compute_masks(tree: QuadTree):
    """Per-node in-domain masks for cut leaves (grazing nodes count as in)."""
    if len(tree.cut_indices) == 0:
        return
    pts = np.concatenate([tree.leaf_nodes(i) for i in tree.cut_indices])
    inside = tree.boundary.contains_robust(pts)
    per = inside.reshape(len(tree.cut_indices), K_LEAF * K_LEAF)
    for row, ci in enumerate(tree.cut_indices):
        tree.node_masks[int(ci)] = per[row]


def build_tree(boundary: BoundarySet, f=None, *, cut_scale=None, tol_source=1e-11,
               max_level=12, min_level=2, uniform_level=None) -> QuadTree:
    """Build the adaptive (or uniform) tree for one boundary and source.

    cut_scale caps the side of cut boxes; when None the local rule
    side <= 2 * (smallest intersecting panel arc) applies.  tol_source
    is the Chebyshev tail threshold that drives interior refinement of
    f (skipped when f is None).  uniform_level builds the full grid at
    one level instead.
    """
    builder = _Builder(boundary, f, cut_scale, tol_source, max_level, min_level)
    builder.initial_refine(uniform_level=uniform_level)
    if uniform_level is None:
        builder.enforce()
    leaves = []
    for i, (key, cls) in enumerate(sorted(builder.leaf_keys.items())):
        leaf = Leaf(key[0], key[1], key[2], cls, i)
        leaves.append(leaf)
    tree = QuadTree(boundary, leaves, builder.nodes)
    _assign_members(tree)
    _compute_masks(tree)
    return tree


def build_uniform_tree(boundary: BoundarySet, level: int, f=None) -> QuadTree:
    return build_tree(boundary, f, uniform_level=level)
