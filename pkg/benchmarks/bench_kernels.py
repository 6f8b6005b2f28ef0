"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--n 15] [--m 5]

Each kernel is timed with :mod:`timeit` on the same inputs for every
available backend; results are checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import math
import sys
import timeit

import numpy as np

from glovedesign import kernels
from glovedesign.harness import synergy_prior


def _cases(n: int, m: int, seed: int):
    prior = synergy_prior(n, seed=seed)
    P = np.ascontiguousarray(prior.cov / prior.spectrum[0])
    rng = np.random.default_rng(seed)
    H = np.ascontiguousarray(np.linalg.qr(rng.standard_normal((n, m)))[0].T)
    R = np.zeros((m, m))
    Rn = 0.05 * np.eye(m)
    P2 = P @ P
    P3 = P2 @ P
    tol = 1e-12 * float(np.sum(P * P))
    return {
        "v1_grad (R=0)": lambda impl: impl.v1_grad(P, H, R, True),
        "v1_grad (R>0)": lambda impl: impl.v1_grad(P, H, Rn, True),
        "v2_value": lambda impl: impl.v2_value(H),
        "v2_flow": lambda impl: impl.v2_flow(H),
        f"subset_scan C({n},{m})": lambda impl: impl.subset_scan(P, P2, P3, R, m, tol),
    }


def _number_for(fn, impl, budget: float = 0.2) -> int:
    t = timeit.timeit(lambda: fn(impl), number=1)
    return max(1, int(budget / max(t, 1e-7)))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=15)
    parser.add_argument("--m", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    impls = kernels.backends()
    if "compiled" not in impls:
        print("compiled backend not built; timing the pure-Python backend only", file=sys.stderr)
    print(f"n={args.n} m={args.m} subsets={math.comb(args.n, args.m)} active={kernels.BACKEND}")
    header = f"{'kernel':<24}" + "".join(f"{name + ' [us]':>18}" for name in impls) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, fn in _cases(args.n, args.m, args.seed).items():
        if "compiled" in impls:
            a, b = fn(impls["python"]), fn(impls["compiled"])
            _check_close(label, a, b)
        times = {}
        for name, impl in impls.items():
            number = _number_for(fn, impl)
            best = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat))
            times[name] = 1e6 * best / number
        row = f"{label:<24}" + "".join(f"{times[name]:>18.2f}" for name in impls)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(row + f"{speed:>9.1f}x")
    return 0


def _check_close(label, a, b) -> None:
    flat_a = [np.asarray(x, dtype=float) for x in (a if isinstance(a, tuple) else (a,)) if x is not None]
    flat_b = [np.asarray(x, dtype=float) for x in (b if isinstance(b, tuple) else (b,)) if x is not None]
    for x, y in zip(flat_a, flat_b):
        if not np.allclose(x, y, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"backends disagree on {label}")


if __name__ == "__main__":
    sys.exit(main())
