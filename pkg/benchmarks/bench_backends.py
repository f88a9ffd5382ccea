"""Microbenchmarks comparing the compiled and numpy kernel lanes.

Runs each hot kernel on a representative workload under both lanes and prints
the median wall time plus the speedup of the compiled lane. Results double as
a parity spot-check: each pair of runs must agree to near machine precision.

    python3 benchmarks/bench_backends.py [--points N] [--rects N] [--repeats R]
"""

import argparse
import statistics
import time

import numpy as np

from orliczsmooth._backend import get_kernels
from orliczsmooth._kernels_py import build_rect_index
from orliczsmooth.geometry import comb_domain, whitney_decompose


def timed(fn, repeats):
    best = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best.append(time.perf_counter() - t0)
    return statistics.median(best), out


def build_workloads(n_points, n_rects, seed=7):
    rng = np.random.default_rng(seed)
    dom = comb_domain()
    verts = np.asarray(dom.vertices, dtype=float)
    edges = dom.edge_array()
    px = rng.uniform(0.0, 1.0, size=n_points)
    py = rng.uniform(0.0, 1.0, size=n_points)
    side = rng.uniform(0.005, 0.05, size=n_rects)
    x0 = rng.uniform(0.0, 0.95, size=n_rects)
    y0 = rng.uniform(0.0, 0.95, size=n_rects)
    rects = np.column_stack([x0, x0 + side, y0, y0 + side])
    # mollifier scene: the actual fine-scale squares of a decomposition
    w = whitney_decompose(dom, max_level=8)
    moll_rects = np.array([q.rect() for q in w.squares if q.level >= 6])
    radius = 2.0 ** -9
    index = build_rect_index(moll_rects, radius)
    return {
        "points_in_polygon": lambda k: k.points_in_polygon(px, py, verts),
        "rect_polygon_distance": lambda k: k.rect_polygon_distance(rects, edges),
        "rect_interior_crossing": lambda k: k.rect_interior_crossing(rects, edges),
        "mollified_eval(dmax=2)": lambda k: k.mollified_eval(
            moll_rects, *index, radius, px, py, 2),
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--rects", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    lanes = {"python": get_kernels("python")}
    try:
        lanes["cython"] = get_kernels("cython")
    except ImportError:
        print("compiled lane not built; timing the numpy lane only")

    workloads = build_workloads(args.points, args.rects)
    print(f"{args.points} points, {args.rects} rects, median of {args.repeats} runs\n")
    header = f"{'kernel':<26} " + "".join(f"{name:>12} " for name in lanes)
    print(header + ("  speedup" if len(lanes) == 2 else ""))
    print("-" * len(header) + ("-" * 9 if len(lanes) == 2 else ""))
    for label, call in workloads.items():
        times = {}
        outputs = {}
        for name, lane in lanes.items():
            times[name], outputs[name] = timed(lambda lane=lane: call(lane),
                                               args.repeats)
        row = f"{label:<26} " + "".join(f"{times[n] * 1e3:>10.2f}ms " for n in lanes)
        if len(lanes) == 2:
            a = np.asarray(outputs["python"], dtype=float)
            b = np.asarray(outputs["cython"], dtype=float)
            # atol rides on the output magnitude: entries that mathematically
            # cancel to zero keep lane-dependent summation residue
            if not np.allclose(a, b, rtol=1e-9, atol=1e-12 * max(1.0, np.abs(b).max())):
                raise SystemExit(f"lane outputs disagree on {label}")
            row += f"  {times['python'] / times['cython']:>6.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
