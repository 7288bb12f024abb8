"""Command-line front end.

Subcommands: precompute | solve | converge | dump-tree | gauss-check.
Run parameters come from an optional flat config file (key = value, #
comments) overridden by --key flags.  Unknown keys are rejected with
the offending file line.  --threads is applied to the BLAS environment
before numpy is first imported, so a single-threaded run is bitwise
reproducible.

Note: heavyweight imports happen inside main(), after the thread count
is pinned.  Keep module-level imports stdlib-only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

# architecture constants baked into the precomputed operators; a config
# may restate them but cannot change them
FIXED_ARCH = {"leaf_k": 8, "stencil_kbar": 12, "support_nodes": 66,
              "panel_nodes": 16}


@dataclass
class RunConfig:
    preset: Optional[str] = None
    uniform_level: Optional[int] = None
    adaptive: bool = False
    tol_tree: Optional[float] = None
    eps_fmm: float = 0.5e-11
    gmres_tol: Optional[float] = None
    extension: Optional[str] = None
    radiation: Optional[float] = None
    levels: str = "3..5"
    out: Optional[str] = None
    format: str = "csv"
    threads: int = 1
    backend: str = "auto"
    cache_dir: Optional[str] = None
    grid_n: int = 100
    leaf_k: int = 8
    stencil_kbar: int = 12
    support_nodes: int = 66
    panel_nodes: int = 16


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, raw: str, where: str):
    from .errors import ConfigError
    if key not in _FIELDS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    tp = _FIELDS[key].type
    try:
        if "int" in tp:
            return int(raw)
        if "float" in tp:
            return float(raw)
        if "bool" in tp:
            return raw.lower() in ("1", "true", "yes", "on")
    except ValueError:
        from .errors import ConfigError as CE
        raise CE(f"{where}: cannot parse {key} = {raw!r}") from None
    return raw


def load_config(path: str) -> dict:
    """Parse a flat `key = value` file; unknown keys name their line."""
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            from .errors import ConfigError
            raise ConfigError(f"{path}:{ln}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        out[key.strip()] = _convert(key.strip(), raw, f"{path}:{ln}")
    return out


def make_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for key in _FIELDS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    cfg = RunConfig(**values)
    from .errors import ConfigError
    for key, fixed in FIXED_ARCH.items():
        if getattr(cfg, key) != fixed:
            raise ConfigError(
                f"config: {key} = {getattr(cfg, key)} is fixed at {fixed} "
                "by the precomputed operators")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"config: format must be csv or json, got {cfg.format!r}")
    return cfg


def _parse_levels(text: str):
    from .errors import ConfigError
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"config: bad levels spec {text!r}, want e.g. 3..6") from None
    if hi < lo:
        raise ConfigError(f"config: empty level range {text!r}")
    return range(lo, hi + 1)


def _problem_from(cfg: RunConfig):
    from dataclasses import replace
    from .errors import ConfigError
    from .presets import PRESETS, preset
    if cfg.preset is None:
        raise ConfigError("config: a preset name is required "
                          f"(one of {sorted(PRESETS)})")
    if cfg.preset not in PRESETS:
        raise ConfigError(f"config: unknown preset {cfg.preset!r} "
                          f"(one of {sorted(PRESETS)})")
    spec = preset(cfg.preset)
    over = {"eps_fmm": cfg.eps_fmm}
    if cfg.uniform_level is not None:
        over["uniform_level"] = cfg.uniform_level
    if cfg.adaptive:
        over["uniform_level"] = None
    if cfg.tol_tree is not None:
        over["tol_tree"] = cfg.tol_tree
    if cfg.gmres_tol is not None:
        over["gmres_tol"] = cfg.gmres_tol
    if cfg.extension is not None:
        over["extension"] = cfg.extension
    if cfg.radiation is not None:
        over["radiation"] = cfg.radiation
    return replace(spec, **over)


def _emit(text: str, cfg: RunConfig, filename: str) -> None:
    if cfg.out is None or cfg.out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        path = Path(cfg.out)
        path.mkdir(parents=True, exist_ok=True)
        (path / filename).write_text(text)
        print(f"wrote {path / filename}")


def cmd_precompute(cfg: RunConfig, force: bool, verify: bool) -> int:
    from . import cache
    from .extension import build_universal_matrix
    from .volpot import precompute_near_tables
    names = ("universal_matrix", "near_tables")
    present = [(cache.cache_dir() / (n + ".npz")).exists() for n in names]
    if all(present) and not force:
        # loadability double-check; corrupt files trigger a rebuild below
        try:
            um = build_universal_matrix()
            precompute_near_tables()
            print("cache valid, nothing to do")
            return 0
        except Exception:
            print("cache unreadable, rebuilding")
    um = build_universal_matrix(use_cache=not force)
    if force:
        build_universal_matrix()          # rewrite the cache entry
    precompute_near_tables(use_cache=not force)
    if force:
        precompute_near_tables()
    for n in names:
        print(f"cached {cache.cache_dir() / (n + '.npz')}")
    if verify:
        import numpy as np
        from .extension import MP_BITS
        from .errors import PrecisionError
        doubled = build_universal_matrix(bits=2 * MP_BITS, use_cache=False)
        rel = float(np.max(np.abs(doubled.matrix - um.matrix))
                    / np.max(np.abs(um.matrix)))
        print(f"precision doubling: max relative drift {rel:.3e}")
        if rel > 1e-12:
            raise PrecisionError(
                f"extension: doubled-precision matrix drifts {rel:.3e} > 1e-12")
    return 0


def cmd_solve(cfg: RunConfig, dump_grid: bool) -> int:
    from .solver import solve_poisson, evaluate_on_grid
    spec = _problem_from(cfg)
    solution, report = solve_poisson(spec, backend=cfg.backend)
    _emit(report.to_json(), cfg, f"{spec.name or 'problem'}-report.json")
    if dump_grid:
        import numpy as np
        values, mask = evaluate_on_grid(solution, n=cfg.grid_n)
        path = Path(cfg.out or ".")
        path.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path / f"{spec.name}-grid.npz",
                            values=values, mask=mask)
        print(f"wrote {path / (spec.name + '-grid.npz')}")
    return 0


def cmd_converge(cfg: RunConfig) -> int:
    from .solver import convergence_study, convergence_csv
    spec = _problem_from(cfg)
    rows = convergence_study(spec, _parse_levels(cfg.levels),
                             backend=cfg.backend)
    if cfg.format == "json":
        _emit(json.dumps(rows, indent=2), cfg, f"{spec.name}-convergence.json")
    else:
        _emit(convergence_csv(rows), cfg, f"{spec.name}-convergence.csv")
    return 0


def cmd_dump_tree(cfg: RunConfig) -> int:
    from .geometry import build_boundary
    from .quadtree import build_tree, build_uniform_tree
    spec = _problem_from(cfg)
    boundary = build_boundary(spec.boundaries, spec.kind)
    if spec.uniform_level is not None:
        tree = build_uniform_tree(boundary, spec.uniform_level, spec.f)
    else:
        tree = build_tree(boundary, spec.f, cut_scale=spec.cut_scale,
                          tol_source=spec.tol_tree, max_level=spec.max_level,
                          min_level=spec.min_level)
    _emit(tree.to_json(), cfg, f"{spec.name}-tree.json")
    return 0


def cmd_gauss_check(cfg: RunConfig, tol: float) -> int:
    import numpy as np
    from .bie import gauss_identity_residual
    from .geometry import build_boundary
    spec = _problem_from(cfg)
    boundary = build_boundary(spec.boundaries, spec.kind)
    rng = np.random.default_rng(20240817)
    keep_w = 1 if spec.kind == "interior" else 0
    bulk = np.empty((0, 2))
    while len(bulk) < 180:
        pts = rng.uniform(-0.5, 0.5, size=(600, 2))
        pts = pts[boundary.winding_numbers(pts) == keep_w]
        bulk = np.concatenate([bulk, pts])[:180]
    comp = boundary.components[0]
    idx = rng.integers(0, comp.nodes_z.size, 20)
    offs = 1e-3 * np.repeat(comp.panel_arc, comp.nodes_z.shape[1])[idx]
    side = np.where(rng.random(20) < 0.5, 1.0, -1.0)
    z = comp.nodes_z.ravel()[idx] + side * offs * comp.normal_z.ravel()[idx]
    pts = np.concatenate([bulk, np.column_stack([z.real, z.imag])])
    res = gauss_identity_residual(boundary, pts)
    status = "ok" if res <= tol else "FAIL"
    print(f"gauss identity residual {res:.3e} over {len(pts)} points "
          f"(tol {tol:g}): {status}")
    return 0 if res <= tol else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="poissonext",
        description="Poisson solver on complicated 2D domains")
    ap.add_argument("--threads", type=int, default=1,
                    help="BLAS thread count (1 = deterministic)")
    ap.add_argument("--cache-dir", dest="cache_dir",
                    help="override the precompute cache directory")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--preset", help="problem preset name")
        p.add_argument("--uniform-level", dest="uniform_level", type=int)
        p.add_argument("--adaptive", action="store_true", default=None)
        p.add_argument("--tol-tree", dest="tol_tree", type=float)
        p.add_argument("--eps-fmm", dest="eps_fmm", type=float)
        p.add_argument("--gmres-tol", dest="gmres_tol", type=float)
        p.add_argument("--extension", choices=("matrix", "ray"))
        p.add_argument("--radiation", type=float)
        p.add_argument("--backend", choices=("auto", "compiled", "python"))
        p.add_argument("--out", help="output directory ('-' = stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--grid-n", dest="grid_n", type=int)

    p = sub.add_parser("precompute", help="build and cache the operators")
    common(p)
    p.add_argument("--force", action="store_true")
    p.add_argument("--verify", action="store_true",
                   help="recompute at doubled precision and compare")

    p = sub.add_parser("solve", help="solve one preset, write a report")
    common(p)
    p.add_argument("--dump-grid", action="store_true")

    p = sub.add_parser("converge", help="uniform-refinement study")
    common(p)
    p.add_argument("--levels", help="inclusive range, e.g. 3..6")

    p = sub.add_parser("dump-tree", help="emit the quad-tree as JSON")
    common(p)

    p = sub.add_parser("gauss-check", help="unit-density identity residual")
    common(p)
    p.add_argument("--tol", type=float, default=1e-10)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    nt = str(max(1, args.threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = nt
    if args.cache_dir:
        os.environ["POISSONEXT_CACHE"] = args.cache_dir

    from .errors import ConfigError, PoissonExtError
    try:
        cfg = make_config(args)
        if args.command == "precompute":
            return cmd_precompute(cfg, args.force, args.verify)
        if args.command == "solve":
            return cmd_solve(cfg, args.dump_grid)
        if args.command == "converge":
            if args.levels is not None:
                cfg.levels = args.levels
            return cmd_converge(cfg)
        if args.command == "dump-tree":
            return cmd_dump_tree(cfg)
        if args.command == "gauss-check":
            return cmd_gauss_check(cfg, args.tol)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PoissonExtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
