"""Poisson solver on complicated 2D domains.

The pipeline: embed the domain in a unit-square quad tree, resolve the
source on leaf Chebyshev grids, extend the source smoothly across cut
cells with a precomputed universal Gaussian-RBF matrix, evaluate the
free-space volume potential with translation-invariant near tables plus
a multipole far field, then correct the boundary values with a
double-layer potential solved by Nystrom + GMRES.
"""
from .errors import (
    PoissonExtError,
    GeometryError,
    OnCurveError,
    TreeError,
    DataStarvedError,
    DegenerateCutError,
    ExtensionError,
    PrecisionError,
    SolveError,
)
from .chebyshev import (
    cheb_nodes,
    grid2d,
    nodes_on_square,
    vals_to_coeffs2d,
    coeffs_to_vals2d,
    eval_cheb2d,
    tail_fraction,
    truncate_total_order,
)
from .quadrature import (
    gauss_legendre,
    gl_points_2d,
    integrate_log_kernel,
    legendre_coeffs_tail,
)
from .geometry import (
    BoundarySet,
    CurveSpec,
    build_boundary,
    classify_point,
)
from .quadtree import (
    QuadTree,
    build_tree,
    build_uniform_tree,
)
from .extension import (
    ExtendedField,
    build_universal_matrix,
    extend_all,
    extend_cut_square,
    field_from_function,
)
from .volpot import (
    MultipoleExpansion,
    NearFieldTable,
    VolumeField,
    box_multipole,
    direct_volume_oracle,
    eval_at_points,
    eval_volume_potential,
    precompute_near_tables,
    radial_gaussian_potential,
)

__version__ = "0.1.0"
