"""End-to-end Poisson solver: u = V[f^e] + u^H.

solve_poisson chains the stages: panelize the boundary, build the
source-resolving quadtree, extend f past the curve on cut boxes,
evaluate the volume potential, then correct the boundary values with a
double-layer density (plus log sources on the appropriate components).
The returned Solution evaluates u anywhere in the closure of the
domain; the SolveReport carries per-stage wall times, counts, and (when
an analytic reference is supplied) grid error norms.

Problems with f = None skip the tree / extension / volume stages
entirely and reduce to the homogeneous boundary-integral solve.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import bie, volpot
from .errors import PoissonExtError, SolveError, TreeError
from .extension import build_universal_matrix, extend_all
from .geometry import CurveSpec, build_boundary
from .quadtree import build_tree, build_uniform_tree

TWO_PI = 2.0 * np.pi
GRID_N_DEFAULT = 100
# outside the root box V is summed from per-leaf multipoles; a leaf
# contributes admissibly when the target is >= FAR_RHO half-diagonals
# from its center ((1/3)^40 ~ 1e-19 tail)
FAR_RHO = 3.0
FAR_ORDER = 40


@dataclass
class ProblemSpec:
    """Everything needed to pose one Dirichlet problem on the unit box.

    boundaries  CurveSpec or list of CurveSpecs
    kind        "interior" | "exterior"
    f           source term f(pts (n,2)) -> (n,), or None for Laplace
    g           Dirichlet data g(pts (n,2)) -> (n,)
    reference   analytic solution for error reporting, optional
    radiation   far-field constant A (u ~ A log|x|); exterior only
    uniform_level  build the full grid at this level; None = adaptive
    """

    boundaries: Sequence
    kind: str
    f: Optional[Callable] = None
    g: Callable = None
    reference: Optional[Callable] = None
    radiation: float = 0.0
    tol_tree: float = 1e-11
    eps_fmm: float = 0.5e-11
    gmres_tol: float = 1e-12
    uniform_level: Optional[int] = None
    max_level: int = 12
    min_level: int = 2
    cut_scale: Optional[float] = None
    extension: str = "matrix"
    name: str = ""


@dataclass
class SolveReport:
    kind: str
    n_leaves: int = 0
    n_cut: int = 0
    n_interior: int = 0
    n_exterior: int = 0
    n_boundary_nodes: int = 0
    times: dict = field(default_factory=dict)
    gmres_iterations: int = 0
    fit_residual: float = 0.0
    mass: float = 0.0
    grid_n: int = 0
    mask_count: int = 0
    linf: Optional[float] = None
    l2: Optional[float] = None
    rel_linf: Optional[float] = None
    rel_l2: Optional[float] = None

    def to_json(self, indent=2) -> str:
        return json.dumps(self.__dict__, indent=indent, default=float)


class Solution:
    """Solved handle: eval(pts) returns u at (n, 2) points."""

    def __init__(self, boundary, tree, source, volume, density, spec):
        self.boundary = boundary
        self.tree = tree
        self.source = source          # ExtendedField or None
        self.volume = volume          # VolumeField or None
        self.density = density        # LayerDensity
        self.spec = spec
        self._leaf_mp = None

    def eval(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = bie.eval_homogeneous(self.density, self.boundary, pts)
        if self.volume is not None:
            inside = (np.abs(pts[:, 0]) <= 0.5) & (np.abs(pts[:, 1]) <= 0.5)
            if inside.any():
                out[inside] += volpot.eval_at_points(self.volume, self.tree,
                                                     pts[inside])
            if (~inside).any():
                out[~inside] += self._far_volume(pts[~inside])
        return out

    __call__ = eval

    def _far_volume(self, pts):
        """V outside the root box, leaf multipoles only."""
        if self._leaf_mp is None:
            mps = []
            vals = self.source.values
            for i, leaf in enumerate(self.tree.leaves):
                if np.any(vals[i]):
                    mps.append((volpot.box_multipole(vals[i], leaf.center,
                                                     leaf.side, FAR_ORDER),
                                leaf.side * math.sqrt(0.5)))
            self._leaf_mp = mps
        z = pts[:, 0] + 1j * pts[:, 1]
        out = np.zeros(len(z))
        for mp, rad in self._leaf_mp:
            if np.min(np.abs(z - mp.center)) < FAR_RHO * rad:
                raise TreeError(
                    "solver: volume eval just outside the root box needs "
                    f"clearance of {FAR_RHO} half-diagonals from every "
                    "source leaf; move the target farther out")
            out += mp.eval(z)
        return out


class _StageClock:
    """Accumulates wall time under a stage key and tags stage errors."""

    def __init__(self, times, name):
        self.times = times
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, etype, exc, tb):
        self.times[self.name] = (self.times.get(self.name, 0.0)
                                 + time.perf_counter() - self.t0)
        if exc is not None and isinstance(exc, PoissonExtError):
            raise type(exc)(f"stage {self.name}: {exc}") from exc
        return False


def solve_poisson(spec: ProblemSpec, *, tables=None, umatrix=None,
                  backend: str = "auto"):
    """Run the full pipeline; returns (Solution, SolveReport)."""
    if spec.kind not in ("interior", "exterior"):
        raise SolveError(f"solver: unknown problem kind {spec.kind!r}")
    if spec.g is None:
        raise SolveError("solver: boundary data g is required")
    times: dict = {}
    report = SolveReport(kind=spec.kind)

    with _StageClock(times, "boundary"):
        boundary = build_boundary(spec.boundaries, spec.kind)
    report.n_boundary_nodes = boundary.n_nodes

    tree = source = vol = None
    if spec.f is not None:
        with _StageClock(times, "tree"):
            if spec.uniform_level is not None:
                tree = build_uniform_tree(boundary, spec.uniform_level, spec.f)
            else:
                tree = build_tree(boundary, spec.f, cut_scale=spec.cut_scale,
                                  tol_source=spec.tol_tree,
                                  max_level=spec.max_level,
                                  min_level=spec.min_level)
        counts = tree.counts()
        report.n_leaves = len(tree.leaves)
        report.n_cut = counts["cut"]
        report.n_interior = counts["interior"]
        report.n_exterior = counts["exterior"]

        with _StageClock(times, "extension_precompute"):
            if len(tree.cut_indices) and umatrix is None:
                umatrix = build_universal_matrix()
            if tables is None:
                tables = volpot.precompute_near_tables()

        with _StageClock(times, "extension"):
            source = extend_all(tree, spec.f, umatrix, method=spec.extension)
        report.fit_residual = float(source.fit_residual)

        with _StageClock(times, "volume"):
            vol = volpot.eval_volume_potential(source, tree, tables=tables,
                                               eps=spec.eps_fmm,
                                               backend=backend)
        report.mass = vol.mass
    else:
        for key in ("tree", "extension_precompute", "extension", "volume"):
            times[key] = 0.0

    with _StageClock(times, "bie_solve"):
        alpha_total = 0.0
        if spec.kind == "exterior":
            alpha_total = spec.radiation - report.mass / TWO_PI
        system = bie.NystromSystem(boundary, alpha_total=alpha_total)
        rhs = bie.assemble_rhs(boundary, spec.g, vol, tree)
        density = bie.solve_density(system, rhs, tol=spec.gmres_tol)
    report.gmres_iterations = density.iterations

    solution = Solution(boundary, tree, source, vol, density, spec)
    report.times = times
    if spec.reference is not None:
        with _StageClock(times, "grid_eval"):
            _fill_grid_errors(solution, report, spec.reference)
    return solution, report


def _fill_grid_errors(solution, report, reference, n: int = GRID_N_DEFAULT):
    values, mask, pts = evaluate_on_grid(solution, n=n, return_points=True)
    got = values[mask]
    want = np.asarray(reference(pts.reshape(-1, 2)[mask.ravel()]), dtype=float)
    err = np.abs(got - want)
    report.grid_n = n
    report.mask_count = int(mask.sum())
    report.linf = float(err.max())
    report.l2 = float(np.sqrt(np.sum(err**2)))
    dinf = float(np.max(np.abs(want)))
    d2 = float(np.sqrt(np.sum(want**2)))
    report.rel_linf = report.linf / dinf if dinf > 0 else math.nan
    report.rel_l2 = report.l2 / d2 if d2 > 0 else math.nan


def evaluate_on_grid(solution: Solution, n: int = GRID_N_DEFAULT,
                     return_points: bool = False):
    """u on the n x n uniform grid over the root box, domain-side mask.

    Returns (values, mask) with values an (n, n) array that is NaN off
    the domain side; mask[i, j] marks grid point (x_j, y_i).  Interior
    problems keep winding-number-1 points, exterior problems keep
    winding 0.
    """
    xs = np.linspace(-0.5, 0.5, n)
    gx, gy = np.meshgrid(xs, xs)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    w = solution.boundary.winding_numbers(pts)
    keep = 1 if solution.boundary.kind == "interior" else 0
    mask = (w == keep).reshape(n, n)
    values = np.full(n * n, np.nan)
    flat = mask.ravel()
    if flat.any():
        values[flat] = solution.eval(pts[flat])
    values = values.reshape(n, n)
    if return_points:
        return values, mask, pts.reshape(n, n, 2)
    return values, mask


def convergence_study(spec: ProblemSpec, levels, *, tables=None,
                      umatrix=None, backend: str = "auto"):
    """Solve at each uniform level; rows of (level, N, linf, l2, order).

    N = 8 * 2^level grid points per direction.  Errors are the relative
    grid norms against spec.reference; order is the observed rate from
    the previous row (NaN on the first).
    """
    if spec.reference is None:
        raise SolveError("solver: convergence_study needs an analytic reference")
    rows = []
    prev = None
    for lvl in levels:
        lspec = replace(spec, uniform_level=int(lvl))
        _, rep = solve_poisson(lspec, tables=tables, umatrix=umatrix,
                               backend=backend)
        order = math.nan
        if prev is not None and prev > 0 and rep.rel_linf > 0:
            order = math.log2(prev / rep.rel_linf)
        rows.append({"level": int(lvl), "N": 8 * 2 ** int(lvl),
                     "linf": rep.rel_linf, "l2": rep.rel_l2, "order": order})
        prev = rep.rel_linf
    return rows


def convergence_csv(rows) -> str:
    lines = ["level,N,linf,l2,order"]
    for r in rows:
        lines.append(f"{r['level']},{r['N']},{r['linf']:.16e},"
                     f"{r['l2']:.16e},{r['order']:.4f}")
    return "\n".join(lines) + "\n"
