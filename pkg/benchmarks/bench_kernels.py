"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each case reports the
best of several repeats for both backends and the speed-up factor.
"""
import argparse
import timeit

import numpy as np

from bornvi import _kernels_py

try:
    from bornvi import _kernels as _compiled
except ImportError:
    _compiled = None


def _cases(rng):
    cases = []
    for n, batch in ((3, 13), (5, 61), (8, 97), (12, 8)):
        states = rng.normal(size=(batch, 1 << n)) + 1j * rng.normal(size=(batch, 1 << n))
        mats = rng.normal(size=(batch, 2, 2)) + 1j * rng.normal(size=(batch, 2, 2))

        def gates(mod, states=states, mats=mats, n=n):
            s = states.copy()
            for q in range(n):
                mod.apply_1q(s, n, q, mats)
            for q in range(n - 1):
                mod.apply_cz(s, n, q, q + 1)

        cases.append((f"one layer, n={n}, batch={batch}", gates))
    for n, m in ((3, 8), (5, 32), (8, 200)):
        z = rng.integers(0, 2, (m, n))
        s = rng.normal(size=(m, n))
        cases.append((f"stein gram, n={n}, m={m}", lambda mod, z=z, s=s: mod.stein_gram(z, s, z, s)))
    return cases


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled kernels are not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'case':34s} {'python us':>10s} {'cython us':>10s} {'speed-up':>9s}")
    for name, fn in _cases(rng):
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), repeat=args.repeat, number=args.number)) / args.number
        if _compiled is None:
            print(f"{name:34s} {t_py * 1e6:10.1f}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_compiled), repeat=args.repeat, number=args.number)) / args.number
        print(f"{name:34s} {t_py * 1e6:10.1f} {t_c * 1e6:10.1f} {t_py / t_c:8.1f}x")


if __name__ == "__main__":
    main()
