"""Backend dispatch for the hot far-field loop.

The compiled extension is optional; when it is missing (source install
without a C compiler) the numpy fallback is used.  `get_backend` picks
the implementation, `available_backends` reports what this install can
run so benchmarks and tests can compare the two.
"""
from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

DEFAULT = "compiled" if _compiled is not None else "python"


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name: str = "auto"):
    """Return the module providing far_accumulate."""
    if name == "auto":
        name = DEFAULT
    if name == "compiled":
        if _compiled is None:
            raise ImportError("kernels: compiled backend is not built")
        return _compiled
    if name == "python":
        return _kernels_py
    raise ValueError(f"kernels: unknown backend {name!r}")
