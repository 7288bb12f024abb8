"""Tensor-product Chebyshev grids and transforms on squares.

Grids use first-kind points, x_j = cos((2j-1)pi/(2K)), stored in
ascending order.  Orders are small (8 on leaf squares, 12 on extension
squares) so all transforms are direct dense matrix applications; no FFT
is needed at these sizes.
"""
import numpy as np
from numpy.polynomial import chebyshev as _cheb

_node_cache: dict = {}
_matrix_cache: dict = {}


def cheb_nodes(k: int) -> np.ndarray:
    """First-kind Chebyshev points on [-1, 1], ascending.

    x_j = cos((2j-1) pi / (2k)) for j = k..1, so the returned array runs
    from -cos(pi/(2k)) up to +cos(pi/(2k)).  Endpoints are never hit,
    which keeps leaf samples strictly inside their square.
    """
    if k < 1:
        raise ValueError("need at least one node")
    if k not in _node_cache:
        j = np.arange(k, 0, -1)
        _node_cache[k] = np.cos((2 * j - 1) * np.pi / (2 * k))
    return _node_cache[k]


def grid2d(k: int) -> np.ndarray:
    """(k*k, 2) tensor grid over [-1,1]^2, x varying fastest."""
    x = cheb_nodes(k)
    xx, yy = np.meshgrid(x, x, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


def nodes_on_square(center, side: float, k: int) -> np.ndarray:
    """(k*k, 2) first-kind grid scaled to the square of given center/side."""
    return np.asarray(center, dtype=float) + 0.5 * side * grid2d(k)


def _transform_matrix(k: int) -> np.ndarray:
    """Map values at cheb_nodes(k) to Chebyshev coefficients (exact)."""
    if k not in _matrix_cache:
        x = cheb_nodes(k)
        # T_m(x_j) on first-kind points; discrete orthogonality gives the
        # inverse in closed form.
        v = _cheb.chebvander(x, k - 1)  # (k, k), v[j, m] = T_m(x_j)
        m = (2.0 / k) * v.T.copy()
        m[0] *= 0.5
        _matrix_cache[k] = m
    return _matrix_cache[k]


def vals_to_coeffs2d(vals: np.ndarray) -> np.ndarray:
    """2D Chebyshev coefficients from values on the k x k first-kind grid.

    vals[i, j] is the sample at (x_i, x_j); the result c[m, n] multiplies
    T_m(x) T_n(y).  Round trip with coeffs_to_vals2d is exact to rounding.
    """
    vals = np.asarray(vals, dtype=float)
    k = vals.shape[0]
    if vals.shape != (k, k):
        raise ValueError("expected a square grid of values")
    m = _transform_matrix(k)
    return m @ vals @ m.T


def coeffs_to_vals2d(coeffs: np.ndarray) -> np.ndarray:
    """Evaluate a 2D Chebyshev expansion back on its own first-kind grid."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.shape[0]
    x = cheb_nodes(k)
    v = _cheb.chebvander(x, k - 1)
    return v @ coeffs @ v.T


def eval_cheb2d(coeffs: np.ndarray, pts: np.ndarray, center=(0.0, 0.0), side: float = 2.0) -> np.ndarray:
    """Evaluate sum c[n,m] T_m(xhat) T_n(yhat) at physical points.

    Points are mapped to the reference square by xhat = 2(x-cx)/side, and
    must satisfy |xhat| <= 1 + 1e-12: extrapolation beyond the square the
    expansion was built on is refused.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    cx, cy = center
    xh = (pts[:, 0] - cx) * (2.0 / side)
    yh = (pts[:, 1] - cy) * (2.0 / side)
    if np.any(np.abs(xh) > 1 + 1e-12) or np.any(np.abs(yh) > 1 + 1e-12):
        raise ValueError("evaluation point outside the expansion square")
    return _cheb.chebval2d(yh, xh, coeffs)


def tail_fraction(coeffs: np.ndarray) -> float:
    """l2 fraction of coefficient mass in the band m + n >= k - 1.

    This is the refinement indicator: near zero once the sampled function
    is resolved at order k.  Returns 0 for an identically-zero block.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    k = coeffs.shape[0]
    m, n = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    band = (m + n) >= k - 1
    total = float(np.sqrt(np.sum(coeffs**2)))
    if total == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(coeffs[band] ** 2))) / total


def truncate_total_order(coeffs: np.ndarray, max_total: int) -> np.ndarray:
    """Zero all coefficients with m + n >= max_total (total-order cut)."""
    coeffs = np.array(coeffs, dtype=float, copy=True)
    k = coeffs.shape[0]
    m, n = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    coeffs[(m + n) >= max_total] = 0.0
    return coeffs
