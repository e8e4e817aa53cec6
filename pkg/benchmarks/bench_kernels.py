"""Time the compiled kernels against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from household_merton import kernels


def cases(rng):
    xi = rng.standard_normal((20_000, 252))
    th = rng.normal(0.9, 0.2, 20_000)
    a1, a2, b, w = (rng.normal(0, 0.1, 513) for _ in range(4))
    return {
        "integrate_affine(n=2048)": lambda k: k.integrate_affine(-0.1875, 0.2221, 0.2564, 0.0043,
                                                                 1 / 2048, 2048, 1e6),
        "simulate_paths(20000x252)": lambda k: k.simulate_paths(xi, 0.9456, 0.9456, 0.99892,
                                                                0.0041, 0.063, 1 / 252, True),
        "weighted_exp_moments(20000x513)": lambda k: k.weighted_exp_moments(th, a1, a2, b, w),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    print(f"{'kernel':34s}" + "".join(f"{n:>12s}" for n in backends) + "     speedup")
    for name, fn in cases(np.random.default_rng(0)).items():
        best = {n: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                for n, k in backends.items()}
        line = f"{name:34s}" + "".join(f"{t * 1e3:10.2f}ms" for t in best.values())
        if "cython" in best:
            line += f"  {best['python'] / best['cython']:9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
