"""Compare the compiled and pure-python far-field accumulation kernels.

Runs a synthetic multipole workload plus a full volume-potential solve on
uniform trees, and reports wall times for both backends.

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from poissonext.geometry import CurveSpec, build_boundary
from poissonext.kernels import available_backends, get_backend
from poissonext.quadtree import build_uniform_tree
from poissonext.volpot import eval_volume_potential, precompute_near_tables


def synthetic_workload(n_src=2000, n_tgt=1500, fan=24, order=40, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-0.5, 0.5, n_src) + 1j * rng.uniform(-0.5, 0.5, n_src)
    hs = np.exp(rng.uniform(np.log(1e-3), np.log(0.1), n_src))
    mass = rng.standard_normal(n_src)
    mom_div = (rng.standard_normal((n_src, order)) * 0.4 ** np.arange(1, order + 1)
               + 1j * rng.standard_normal((n_src, order)) * 0.4 ** np.arange(1, order + 1))
    ptr = np.zeros(n_src + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(rng.integers(fan // 2, fan, n_src))
    # target indices must be distinct within one source's segment, as in
    # real interaction lists (the numpy kernel accumulates per segment)
    tgt = np.concatenate([
        rng.choice(n_tgt, ptr[s + 1] - ptr[s], replace=False)
        for s in range(n_src)]).astype(np.int64)
    # keep targets well away from sources so the series converges
    g = np.linspace(-1, 1, 8)
    gz = np.add.outer(1j * g, g).ravel()
    tz = (rng.uniform(2.0, 4.0, n_tgt) + 1j * rng.uniform(2.0, 4.0, n_tgt))[:, None] \
        + 0.02 * gz[None, :]
    return tz, centers, hs, mass, np.ascontiguousarray(mom_div), ptr, tgt


def run_synthetic():
    args = synthetic_workload()
    results = {}
    for name in available_backends():
        kern = get_backend(name)
        out = np.zeros((args[0].shape[0], 64))
        kern.far_accumulate(out, *args)
        t0 = time.perf_counter()
        for _ in range(5):
            kern.far_accumulate(out, *args)
        results[name] = (time.perf_counter() - t0) / 5.0, out.copy()
    return results


def run_tree(level, tables):
    boundary = build_boundary(
        [CurveSpec("fourier-polar", {"center": (0, 0), "cos_coeffs": [0.35]},
                   min_panels=48)], "interior")
    tree = build_uniform_tree(boundary, level)

    class Field:
        pass

    field = Field()
    from poissonext.chebyshev import grid2d
    ref = grid2d(8)
    vals = np.zeros((len(tree.leaves), 8, 8))
    for i in range(len(tree.leaves)):
        pts = tree.centers[i] + 0.5 * tree.sides[i] * ref
        vals[i] = (np.sin(3 * pts[:, 0]) * np.cos(2 * pts[:, 1])).reshape(8, 8)
    field.values = vals

    results = {}
    for name in available_backends():
        t0 = time.perf_counter()
        vol = eval_volume_potential(field, tree, tables=tables, backend=name)
        results[name] = time.perf_counter() - t0, vol.values
    return tree, results


def main():
    names = available_backends()
    print(f"backends: {', '.join(names)}")

    print("\nsynthetic far-field accumulation (2000 sources, order 40):")
    res = run_synthetic()
    base = res.get("python", next(iter(res.values())))[0]
    for name, (dt, out) in res.items():
        print(f"  {name:9s} {dt * 1e3:9.2f} ms   x{base / dt:5.1f}")
    if len(res) == 2:
        d = np.max(np.abs(res["python"][1] - res["compiled"][1]))
        print(f"  max deviation between backends: {d:.3e}")

    tables = precompute_near_tables()
    for level in (5, 6):
        tree, res = run_tree(level, tables)
        print(f"\nfull volume potential, uniform level {level} "
              f"({len(tree.leaves)} leaves):")
        base = res.get("python", next(iter(res.values())))[0]
        for name, (dt, out) in res.items():
            print(f"  {name:9s} {dt:9.3f} s    x{base / dt:5.1f}")
        if len(res) == 2:
            d = np.max(np.abs(res["python"][1] - res["compiled"][1]))
            print(f"  max deviation between backends: {d:.3e}")


if __name__ == "__main__":
    main()
