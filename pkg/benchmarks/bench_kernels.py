"""Compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the transportation simplex on random square problems and the
product-chain simulator on the bundled fixtures, checks that both backends
return the same answers, and prints one line per case.
"""
import argparse
import time

import numpy as np

from ticert import _fallback
from ticert.fixtures import load_fixture

try:
    from ticert import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def transport_cases(sizes, seed=0):
    rng = np.random.default_rng(seed)
    for m in sizes:
        a = rng.dirichlet(np.ones(m))
        b = rng.dirichlet(np.ones(m))
        pts = rng.normal(size=(m, 2))
        cost = np.ascontiguousarray(np.linalg.norm(pts[:, None] - pts[None, :], axis=2) ** 2)
        yield f"transport {m}x{m}", (a, b, cost, 50 * (2 * m) ** 2 + 1000)


def simulation_cases(paths):
    for name, n in (("two_state", 1), ("two_state", 2), ("cycle4", 2)):
        chain = load_fixture(name)
        size = chain.size**n
        f = np.linspace(0.0, 1.0, size)
        cdf = np.cumsum(np.full(size, 1.0 / size))
        yield f"simulate {name} n={n} ({paths} paths, t=50)", (chain.rates, n, f, cdf, 50.0, 1, 0, paths)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--paths", type=int, default=20_000)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
        return 1

    print(f"{'case':44s} {'compiled':>11s} {'python':>11s} {'speedup':>8s}  agree")
    rows = [(label, "transport_simplex", a) for label, a in transport_cases((16, 32, 64, 96))]
    rows += [(label, "simulate_time_averages", a) for label, a in simulation_cases(args.paths)]
    for label, fn_name, fn_args in rows:
        tc, rc = best_of(lambda: getattr(_kernels, fn_name)(*fn_args), args.repeat)
        tp, rp = best_of(lambda: getattr(_fallback, fn_name)(*fn_args), args.repeat)
        if fn_name == "transport_simplex":
            cost = fn_args[2]
            agree = abs(float(np.sum(rc[0] * cost)) - float(np.sum(rp[0] * cost))) <= 1e-12 and rc[3] == rp[3]
        else:
            agree = float(np.abs(rc - rp).max()) <= 1e-12
        print(f"{label:44s} {tc * 1e3:9.2f}ms {tp * 1e3:9.2f}ms {tp / tc:7.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
