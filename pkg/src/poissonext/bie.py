"""Boundary correction: Nystrom double layer, GMRES, close evaluation.

The harmonic part of the solution is a double layer potential over the
panelized boundary, augmented with log sources anchored inside holes
(multiply connected interior) or inside every inclusion plus the
density mean (exterior).  With the normals of the geometry module
pointing out of the solution domain, the boundary limit of the double
layer from inside the domain is (-1/2 + D)[sigma] for every problem
kind, and the layer of unit density equals minus the winding number of
the boundary at any off-curve point; that identity locks the sign and
curvature-diagonal conventions testably.

Close evaluation: a target within three panel arclengths of a panel
gets that panel's contribution from recursive bisection, interpolating
the density onto 32 Gauss-Legendre nodes per sub-panel until the target
is separated from the sub-panel by its own arclength.
"""
import numpy as np
from scipy.sparse.linalg import gmres

from .errors import OnCurveError, SolveError
from .geometry import NODES_PER_PANEL
from .quadrature import gauss_legendre

INV2PI = 1.0 / (2.0 * np.pi)
NEAR_FACTOR = 3.0        # panel arclengths; beyond this the plain rule holds
SUB_NODES = 32
MAX_BISECT = 40
GMRES_TOL = 1e-12
GMRES_MAXITER = 500
CURVE_CLEARANCE = 1e-13

_TQ, _WQ = gauss_legendre(NODES_PER_PANEL)
_TQ32, _WQ32 = gauss_legendre(SUB_NODES)
# barycentric weights of the 16 canonical panel nodes
_BARY = np.array([1.0 / np.prod(_TQ[i] - np.delete(_TQ, i))
                  for i in range(NODES_PER_PANEL)])


def _kernel_rows(tz, z, nu):
    """Double layer kernel (no weights) from sources (z, nu) to targets tz.

    Coincident points give a zero entry; the self-assembly overwrites
    the diagonal with the curvature limit afterwards.
    """
    d = tz[:, None] - z[None, :]
    r2 = d.real**2 + d.imag**2
    num = d.real * nu.real[None, :] + d.imag * nu.imag[None, :]
    return INV2PI * num / np.where(r2 == 0.0, 1.0, r2), r2


class NystromSystem:
    """Dense collocation system for the harmonic correction.

    Unknown layout: [sigma at all boundary nodes; A_1 .. A_m] where the
    A_k multiply log||x - s_k|| columns.  Interior problems carry one
    log source per hole with a zero-mean constraint on the hole's
    density; exterior problems carry one per inclusion, zero-mean
    constraints on all but the last, and the closing row sum(A_k) =
    alpha_total that enforces the radiation condition.
    """

    def __init__(self, boundary, alpha_total: float = 0.0):
        self.boundary = boundary
        self.kind = boundary.kind
        self.alpha_total = float(alpha_total)
        n = boundary.n_nodes
        z = boundary.nodes_z
        w = boundary.arc_w

        kern, _ = _kernel_rows(z, z, boundary.normal_z)
        np.fill_diagonal(kern, -boundary.curvature / (4.0 * np.pi))
        op = kern * w[None, :]
        op[np.diag_indices(n)] -= 0.5
        if self.kind == "exterior":
            op += INV2PI * w[None, :]

        if self.kind == "interior":
            aug = [i for i, o in enumerate(boundary.orientations) if o == -1]
            constrained = aug
        else:
            aug = list(range(len(boundary.components)))
            constrained = aug[:-1]
        self.aug_components = aug
        self.sources = boundary.anchors[aug] if aug else np.zeros(0, complex)
        m = len(aug)
        self.n_nodes = n
        self.n_aug = m

        mat = np.zeros((n + m, n + m))
        mat[:n, :n] = op
        for col, k in enumerate(aug):
            mat[:n, n + col] = np.log(np.abs(z - self.sources[col]))
        tail = np.zeros(m)
        for row, k in enumerate(constrained):
            sl = boundary.comp_slices[k]
            mat[n + row, sl] = w[sl] / boundary.arclengths[k]
        if self.kind == "exterior" and m:
            mat[n + m - 1, n:] = 1.0
            tail[m - 1] = self.alpha_total
        self.matrix = mat
        self.constraint_rhs = tail


def apply_system(system: NystromSystem, vec):
    """One dense operator application (the GMRES matvec)."""
    return system.matrix @ np.asarray(vec, dtype=float)


def assemble_rhs(boundary, g, volfield=None, tree=None):
    """Boundary data minus the volume potential at the Nystrom nodes."""
    pts = np.column_stack([boundary.nodes_z.real, boundary.nodes_z.imag])
    rhs = np.asarray(g(pts), dtype=float)
    if rhs.shape != (boundary.n_nodes,):
        raise SolveError("bie: boundary data provider returned a bad shape")
    if volfield is not None:
        from .volpot import eval_at_points
        rhs = rhs - eval_at_points(volfield, tree, pts)
    return rhs


class LayerDensity:
    """Solved density with its augmentation constants."""

    def __init__(self, sigma, constants, sources, kind, sigma_mean,
                 iterations, residual):
        self.sigma = sigma
        self.constants = constants
        self.sources = sources
        self.kind = kind
        self.sigma_mean = sigma_mean     # (1/2pi) * integral of sigma
        self.iterations = iterations
        self.residual = residual


def solve_density(system: NystromSystem, rhs, tol: float = GMRES_TOL):
    """Full (unrestarted) GMRES on the collocation system."""
    b = np.concatenate([np.asarray(rhs, dtype=float), system.constraint_rhs])
    its = [0]

    def count(_):
        its[0] += 1

    size = len(b)
    x, info = gmres(system.matrix, b, rtol=tol, atol=0.0,
                    restart=min(size, GMRES_MAXITER), maxiter=1,
                    callback=count, callback_type="pr_norm")
    resid = np.linalg.norm(system.matrix @ x - b)
    bnorm = np.linalg.norm(b)
    if info != 0 and resid > tol * max(bnorm, 1e-300):
        raise SolveError(
            f"bie: gmres did not reach {tol:g} in {its[0]} iterations "
            f"(residual {resid:.3e})")
    n = system.n_nodes
    sigma = x[:n]
    mean = INV2PI * float(system.boundary.arc_w @ sigma)
    return LayerDensity(sigma, x[n:], system.sources, system.kind, mean,
                        its[0], resid)


def unit_density(boundary):
    """sigma = 1 with no augmentation, for the Gauss identity check."""
    return LayerDensity(np.ones(boundary.n_nodes), np.zeros(0),
                        np.zeros(0, complex), "interior", 0.0, 0, 0.0)


# -- evaluation --------------------------------------------------------------


def _interp_panel_density(sigma_nodes, xi):
    """Barycentric interpolation from the 16 panel nodes to xi in [-1,1]."""
    d = xi[:, None] - _TQ[None, :]
    hit = np.abs(d) < 1e-14
    d = np.where(hit, 1.0, d)
    wts = _BARY[None, :] / d
    vals = (wts @ sigma_nodes) / wts.sum(axis=1)
    rows = np.nonzero(hit.any(axis=1))[0]
    for r in rows:
        vals[r] = sigma_nodes[np.argmax(hit[r])]
    return vals


def _close_panel_value(comp, lp, sigma_nodes, zeta):
    """Double layer of one panel at a target near it, by bisection."""
    t0, t1 = comp.breaks[lp], comp.breaks[lp + 1]
    total = 0.0
    stack = [(t0, t1, 0)]
    while stack:
        a, b, depth = stack.pop()
        half = 0.5 * (b - a)
        ts = 0.5 * (a + b) + half * _TQ32
        zs = comp.curve.z(ts)
        dzs = comp.curve.dz(ts)
        speed = np.abs(dzs)
        arc = float(speed @ _WQ32) * half
        d = zeta - zs
        r2 = d.real**2 + d.imag**2
        dist = np.sqrt(r2.min())
        if dist >= arc or depth >= MAX_BISECT:
            if dist < CURVE_CLEARANCE:
                raise OnCurveError(
                    "bie: evaluation point within 1e-13 of the boundary")
            nu = -1j * dzs / speed
            kern = INV2PI * (d.real * nu.real + d.imag * nu.imag) / r2
            xi = (ts - 0.5 * (t0 + t1)) / (0.5 * (t1 - t0))
            sig = _interp_panel_density(sigma_nodes, xi)
            total += float(np.sum(kern * sig * speed * _WQ32)) * half
        else:
            mid = 0.5 * (a + b)
            stack.append((a, mid, depth + 1))
            stack.append((mid, b, depth + 1))
    return total


def _eval_double_layer(sigma, boundary, tz, chunk: int = 512):
    """Plain Nystrom sum with per-panel close-evaluation correction."""
    z = boundary.nodes_z
    nu = boundary.normal_z
    w = boundary.arc_w
    sw = sigma * w
    npan = len(boundary.panel_arc_all)
    pan16 = z.reshape(npan, NODES_PER_PANEL)
    out = np.empty(len(tz))
    thresh = NEAR_FACTOR * boundary.panel_arc_all

    comp_pan_off = np.cumsum([0] + [c.n_panels for c in boundary.components])

    for lo in range(0, len(tz), chunk):
        sel = slice(lo, min(lo + chunk, len(tz)))
        kern, r2 = _kernel_rows(tz[sel], z, nu)
        out[sel] = kern @ sw
        pdist = np.sqrt(r2.reshape(-1, npan, NODES_PER_PANEL).min(axis=2))
        near_t, near_p = np.nonzero(pdist < thresh[None, :])
        for t, p in zip(near_t, near_p):
            gi = lo + t
            ci = np.searchsorted(comp_pan_off, p, side="right") - 1
            comp = boundary.components[ci]
            lp = p - comp_pan_off[ci]
            nodes_sl = slice(p * NODES_PER_PANEL, (p + 1) * NODES_PER_PANEL)
            plain = float(kern[t, nodes_sl] @ sw[nodes_sl])
            fixed = _close_panel_value(comp, lp, sigma[nodes_sl], tz[gi])
            out[gi] += fixed - plain
    return out


def eval_homogeneous(density: LayerDensity, boundary, targets):
    """Harmonic correction at off-curve points (either side allowed)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    tz = targets[:, 0] + 1j * targets[:, 1]
    u = _eval_double_layer(density.sigma, boundary, tz)
    for ak, sk in zip(density.constants, density.sources):
        u += ak * np.log(np.abs(tz - sk))
    if density.kind == "exterior":
        u += density.sigma_mean
    return u


def gauss_identity_residual(boundary, points):
    """max |D[1](x) + winding(x)| over the given off-curve points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tz = points[:, 0] + 1j * points[:, 1]
    u = _eval_double_layer(np.ones(boundary.n_nodes), boundary, tz)
    wind = boundary.winding_numbers(points)
    return float(np.max(np.abs(u + wind)))
