"""Exception types shared across the package.

Every error raised by the pipeline carries the failing stage in its
message so CLI output can point at geometry / tree / extension /
volume / bie directly.
"""


class PoissonExtError(Exception):
    """Base class for all package errors."""


class GeometryError(PoissonExtError):
    """Invalid curve data: unresolvable panels, wrong orientation, bad winding."""


class OnCurveError(GeometryError):
    """A query point sits on (or numerically on) the boundary."""


class TreeError(PoissonExtError):
    """Quad-tree construction failure (max level exceeded, invariant broken)."""


class DataStarvedError(PoissonExtError):
    """A cut cell has fewer interior stencil samples than support nodes."""


class DegenerateCutError(PoissonExtError):
    """The interior part of a cut-cell stencil is rank-deficient."""


class ExtensionError(PoissonExtError):
    """Extended-field assembly broke an invariant (double write, bad backend)."""


class PrecisionError(PoissonExtError):
    """Extended-precision build of the extension matrix failed to validate."""


class SolveError(PoissonExtError):
    """Linear solve failure (GMRES stagnation / iteration cap)."""


class ConfigError(PoissonExtError):
    """Bad run configuration: unknown key, unparsable value, missing preset."""
