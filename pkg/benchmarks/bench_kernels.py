"""Compiled vs numpy cubic convolution on coefficient maps of growing support.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import itertools
import timeit

import numpy as np

from lindstedt import _kernels_py
from lindstedt.series import _as_arrays

try:
    from lindstedt import _kernels
except ImportError:
    _kernels = None


def coefficient_map(radius: int, D: int = 2, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    out = {}
    for m in itertools.product(range(-radius, radius + 1), repeat=D):
        out[(1, m)] = float(rng.standard_normal())
    return out


def prepare(d: dict):
    k, v = _as_arrays(d)
    lo = 2 * k.min(0) - k.max(0)
    hi = 2 * k.max(0) - k.min(0)
    return (np.ascontiguousarray(k), v, np.ascontiguousarray(k), v, np.ascontiguousarray(k), v,
            lo.astype(np.int64), (hi - lo + 1).astype(np.int64))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = {"numpy": _kernels_py.cubic_convolve}
    if _kernels is not None:
        backends["cython"] = _kernels.cubic_convolve
    print(f"{'radius':>6} {'terms':>10} " + " ".join(f"{b:>12}" for b in backends) + "  speedup")
    for radius in (1, 2, 3, 4, 5):
        argv = prepare(coefficient_map(radius))
        n = len(argv[1]) ** 3
        ref = backends["numpy"](*argv)
        times = {}
        for name, fn in backends.items():
            assert np.allclose(fn(*argv), ref, rtol=1e-12, atol=1e-12)
            times[name] = min(timeit.repeat(lambda: fn(*argv), number=1, repeat=args.repeat))
        speed = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{radius:>6} {n:>10} " + " ".join(f"{times[b] * 1e3:>10.3f}ms" for b in backends)
              + f"  {speed:6.1f}x")


if __name__ == "__main__":
    main()
