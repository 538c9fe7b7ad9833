"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time for each backend and
the speedup.  Inputs mirror the solver hot paths on a two-asset portfolio.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from tailrisk import _kernels


def cases(rng):
    mu, target = np.array([0.05, 0.03]), 0.035
    F = rng.normal(size=(20_000, 1, 2))
    w = np.exp(rng.normal(scale=0.3, size=20_000))
    theta = np.array([0.4, 0.6])
    cons = (mu, target, True, True, True)
    X = rng.normal(size=(20_000, 2))
    Fsa = rng.normal(size=(5_000, 1, 2))
    wsa = np.ones(5_000)
    return {
        "project (x1000)": lambda k: [k.project(np.array([0.9, 0.4]) + 0.001 * i, *cons) for i in range(1000)],
        "objective_subgrad n=2e4": lambda k: k.objective_subgrad(F, w, 1.0, theta, 0.01),
        "psg_minimize n=2e3": lambda k: k.psg_minimize(F[:2000], w[:2000], 0.01, 0.0, theta, *cons, 1e-3),
        "sa_steps n=5e3": lambda k: k.sa_steps(Fsa, wsa, 0.0, theta, 0.0, np.zeros(2), 0, 1.0, 0.75, 0.01,
                                               *cons, np.inf, -np.inf, 0.5),
        "selfstruct_map n=2e4": lambda k: k.selfstruct_map(X, 2.0, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        compiled = _kernels.get("cython")
    except ImportError:
        print("compiled extension not built; only the fallback is available")
        return 1
    fallback = _kernels.get("python")
    print(f"{'kernel':28s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        times = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for mod in (fallback, compiled)]
        print(f"{name:28s} {times[0]:10.4f} {times[1]:10.4f} {times[0] / times[1]:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
