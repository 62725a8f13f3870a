"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--size 480] [--repeat 5]

Checks outputs are bit-identical, then reports the best-of-N wall time.
"""

import argparse
import time

import numpy as np

from vostools import kernels
from vostools.augment import GeomParams, geom_matrix, invert_affine


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=480)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; only numpy available")
    h, w = args.size, args.size * 16 // 9
    rng = np.random.default_rng(0)
    img = rng.random((h, w, 3))
    labels = rng.integers(0, 4, size=(h, w)).astype(np.int32)
    mask = np.zeros((h, w), bool)
    mask[h // 4 : 3 * h // 4, w // 4 : 3 * w // 4] = True
    inv = invert_affine(geom_matrix(GeomParams(False, 12.0, 5.0, 0.0, 1.1), w, h))
    radius = max(1, int(np.floor(0.008 * np.hypot(h, w) + 0.5)))

    cases = {
        "warp_bilinear": lambda m: m.warp_bilinear(img, inv, h, w),
        "warp_nearest": lambda m: m.warp_nearest(labels, inv, h, w),
        "boundary_map": lambda m: m.boundary_map(mask),
        "dilate_disk": lambda m: m.dilate_disk(mask, radius),
    }
    print(f"frame {w}x{h}, best of {args.repeat}")
    print(f"{'kernel':<15}" + "".join(f"{name:>12}" for name in impls) + f"{'identical':>11}")
    for name, fn in cases.items():
        row, outs = f"{name:<15}", []
        for mod in impls.values():
            dt, out = best_of(lambda: fn(mod), args.repeat)
            row += f"{dt * 1e3:>10.2f}ms"
            outs.append(out)
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        print(row + f"{str(same):>11}")


if __name__ == "__main__":
    main()
