"""Time the compiled crossing kernel against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--segments N] [--repeat R]

Segments are drawn between random points of an indoor/outdoor realization,
so the building count and segment lengths match a real campaign.
"""
import argparse
import time

import numpy as np

from coexsim import kernels
from coexsim.propagation import _boxes
from coexsim.scenario import generate_indoor_outdoor


def segments(n: int, seed: int = 7):
    real = generate_indoor_outdoor(seed, 5000.0, 20)
    boxes, cells = _boxes(real.buildings)
    pts = np.concatenate([real.ap_positions, real.user_positions])
    blds = np.concatenate([real.ap_buildings, real.user_buildings])
    rng = np.random.default_rng(seed)
    i, j = rng.integers(0, len(pts), (2, n))
    return pts[i], pts[j], blds[i], blds[j], boxes, cells


def best_of(fn, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--segments", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    data = segments(args.segments)
    print(f"{args.segments} segments, {len(data[4])} buildings")
    t_py = best_of(kernels.segment_crossings_py, data, args.repeat)
    print(f"numpy   {t_py * 1e3:9.1f} ms")
    if kernels.segment_crossings_compiled is None:
        print("cython  not built")
        return
    t_c = best_of(kernels.segment_crossings_compiled, data, args.repeat)
    print(f"cython  {t_c * 1e3:9.1f} ms   speed-up x{t_py / t_c:.1f}")
    a = kernels.segment_crossings_py(*data)
    b = kernels.segment_crossings_compiled(*data)
    same = all(np.array_equal(a[k], b[k]) for k in a)
    print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
