"""Benchmark the compiled radial kernel against the pure-numpy fallback.

Run:  python3 benchmarks/bench_radial.py [--nodes N] [--t-end T]
"""
import argparse
import time

import numpy as np

from jtoric import kernels


def bench(impl, name, f, B, h, a, n, cfl, t_end):
    t0 = time.perf_counter()
    out, t, steps = kernels.radial_advance(
        f.copy(), B, h, a, n, cfl, 0.0, t_end, impl=impl)
    wall = time.perf_counter() - t0
    print(f"{name:>10}: {steps:>9d} steps in {wall:8.3f} s "
          f"({1e6 * wall / steps:7.3f} us/step)")
    return out, wall


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=2048)
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--cfl", type=float, default=0.4)
    args = ap.parse_args()

    n, a, b = 2, 1.5, 2.0
    B = np.linspace(1.0, b, args.nodes)
    f = 1.0 + (a - 1.0) * (B - 1.0) / (b - 1.0)
    h = float(B[1] - B[0])

    print(f"radial flow: n={n} a={a} b={b} nodes={args.nodes} "
          f"t_end={args.t_end} cfl={args.cfl}")
    fn, wn = bench(kernels.numpy_impl, "numpy", f, B, h, a, n,
                   args.cfl, args.t_end)
    if kernels.HAVE_COMPILED:
        fc, wc = bench(kernels.compiled_impl, "compiled", f, B, h, a, n,
                       args.cfl, args.t_end)
        print(f"{'speedup':>10}: {wn / wc:8.1f}x   "
              f"max |compiled - numpy| = {np.abs(fc - fn).max():.3e}")
    else:
        print("compiled kernel unavailable; numpy fallback only")


if __name__ == "__main__":
    main()
