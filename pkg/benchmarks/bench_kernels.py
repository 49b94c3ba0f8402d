"""Time the compiled kernels against the pure-Python fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Also checks that
both backends return identical results on the benchmark inputs.
"""

import argparse
import timeit

import numpy as np

from invdp import _kernels_py as py
from invdp.model_core import negbin_pmf_vector

try:
    from invdp import _kernels as cy
except ImportError:  # extension not built
    cy = None


def inputs(T=20_000, seed=0):
    rng = np.random.default_rng(seed)
    nk, n_act = 51, 9
    y = np.arange(0, 49, 6, dtype=np.int64)
    k = np.arange(0, 101, 2, dtype=np.int64)
    pmf = negbin_pmf_vector(2.5, 0.33)
    sim = (rng.normal(size=(32 * nk, n_act)), y, rng.normal(0.5, 0.1, size=T), 0.52, 0.33,
           rng.integers(0, 8, size=T).astype(np.int64), 4, 1.9, nk, 2, 100,
           rng.gumbel(size=(T, n_act)), rng.random(T), 24, np.full(7, 2.0))
    trans = (pmf / pmf.sum(), k, y, 1.0, 3.0, 2, 100)
    return sim, trans


def bench(label, fn, args, repeat):
    best = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
    print(f"  {label:<8} {best * 1e3:9.2f} ms")
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    sim, trans = inputs()
    for name, a in (("simulate_days (T=20000)", sim), ("accumulate_k_transitions", trans)):
        fn = name.split(" ")[0]
        print(name)
        t_py = bench("python", getattr(py, fn), a, args.repeat)
        if cy is None:
            print("  compiled extension not available")
            continue
        t_cy = bench("cython", getattr(cy, fn), a, args.repeat)
        out_py, out_cy = getattr(py, fn)(*a), getattr(cy, fn)(*a)
        same = all(np.array_equal(x, y) for x, y in zip(
            out_py if isinstance(out_py, tuple) else (out_py,),
            out_cy if isinstance(out_cy, tuple) else (out_cy,)))
        print(f"  speed-up {t_py / t_cy:6.1f}x, identical results: {same}")


if __name__ == "__main__":
    main()
