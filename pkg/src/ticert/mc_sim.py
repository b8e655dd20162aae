"""Exact simulation of reversible chains and Monte Carlo deviation checks.

Random numbers come from a SplitMix64 counter hash: replica r of a run
with seed s reads the stream ``mix64(s ^ r)`` at counters 0, 1, 2, ...
Counter 0 draws the initial state; jump j uses counters 2j+1 (holding
time) and 2j+2 (transition). Estimates therefore depend only on
(seed, replica index), never on how replicas are split among workers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _backend
from ._fallback import stream_base, uniform
from .chain import ReversibleChain, as_weights, lipschitz_constant
from .config import check_budget
from .errors import DimensionMismatch, InvariantViolation, NotLipschitz
from .spectral import product_stationary
from .transport import ProductMetric

Z95 = 1.959963984540054
CHUNK = 8192


@dataclass(frozen=True)
class PathSample:
    """Piecewise-constant path: ``states[i]`` holds on [times[i], times[i+1])."""

    times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size != np.asarray(self.states).size or t.size == 0:
            raise InvariantViolation("path needs one entry time per visited state")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0) or t[-1] > self.horizon:
            raise InvariantViolation("jump times must start at 0, increase strictly and stay within the horizon")

    @property
    def jumps(self) -> int:
        return self.times.size - 1

    def holding_times(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.horizon))


def _draw_index(cdf: np.ndarray, u: float) -> int:
    return int(min(np.searchsorted(cdf, u, side="left"), cdf.size - 1))


def simulate_path(chain: ReversibleChain, start_state: Optional[int], horizon: float, seed: int,
                  replica: int = 0) -> PathSample:
    """Exact path on [0, horizon]; ``start_state=None`` draws it from mu."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    q = chain.rates
    e = chain.size
    base = stream_base(int(seed), int(replica))
    if start_state is None:
        x = _draw_index(np.cumsum(chain.pi), uniform(base, 0))
    else:
        x = int(start_state)
        if not 0 <= x < e:
            raise DimensionMismatch(f"start state {x} outside 0..{e - 1}")
    offd = q.copy()
    np.fill_diagonal(offd, 0.0)
    cum = np.cumsum(offd, axis=1)
    times = [0.0]
    states = [x]
    clock = 0.0
    step = 0
    while True:
        total = -q[x, x]
        tau = -math.log(uniform(base, 2 * step + 1)) / total
        if clock + tau >= horizon:
            break
        clock += tau
        target = uniform(base, 2 * step + 2) * total
        y = min(int(np.sum(target >= cum[x])), e - 1)
        while offd[x, y] <= 0:
            y = y - 1 if y > 0 else y + 1
        x = y
        times.append(clock)
        states.append(x)
        step += 1
    return PathSample(np.array(times), np.array(states, dtype=np.int64), float(horizon))


def time_average(path: PathSample, f) -> float:
    """(1/t) times the integral of f(X_s) over [0, t], exact for the path."""
    fv = np.asarray(f, dtype=float)
    if path.states.max() >= fv.size:
        raise DimensionMismatch(f"f has {fv.size} values but the path visits state {int(path.states.max())}")
    return float(np.sum(fv[path.states] * path.holding_times()) / path.horizon)


def refine(path: PathSample, extra_times: Sequence[float]) -> PathSample:
    """Insert phantom jumps (state unchanged) at the given times."""
    extra = np.asarray([s for s in extra_times if 0 < s < path.horizon and s not in set(path.times)])
    times = np.concatenate([path.times, extra])
    owner = np.searchsorted(path.times, extra, side="right") - 1
    states = np.concatenate([path.states, path.states[owner]])
    order = np.argsort(times, kind="stable")
    return PathSample(times[order], states[order], path.horizon)


def occupation(path: PathSample, size: int) -> np.ndarray:
    return np.bincount(path.states, weights=path.holding_times(), minlength=size) / path.horizon


# ---------------------------------------------------------------------------
# deviation probabilities


def wilson_interval(successes: int, trials: int, z: float = Z95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    low = max(0.0, centre - half)
    high = min(1.0, centre + half)
    # guard the ordering against rounding at p = 0 or 1
    return min(low, p), max(high, p)


@dataclass(frozen=True)
class DeviationEstimate:
    r: float
    t: float
    n: int
    p_hat: float
    wilson_low: float
    wilson_high: float
    n_paths: int
    bound: float
    l2_factor: float

    @property
    def violated(self) -> bool:
        """The lower confidence limit exceeds the proven bound."""
        return self.wilson_low > self.bound

    def row(self):
        return [repr(float(self.r)), repr(float(self.t)), self.n, repr(self.p_hat), repr(self.wilson_low),
                repr(self.wilson_high), repr(self.bound), repr(self.l2_factor)]


CSV_COLUMNS = ["r", "t", "n", "p_hat", "wilson_low", "wilson_high", "bound", "l2_factor"]


def write_csv(estimates: Sequence[DeviationEstimate], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for est in estimates:
            w.writerow(est.row())


def l2_factor(nu0, pi) -> float:
    """L2(mu^n) norm of d nu0 / d mu^n."""
    a = np.asarray(nu0, dtype=float)
    return math.sqrt(float(np.sum(a * a / pi)))


def simulate_averages(chain: ReversibleChain, n: int, nu0, f, t: float, n_paths: int, seed: int,
                      workers: int = 1) -> np.ndarray:
    """Time averages of f over ``n_paths`` replicas of the n-fold chain started from nu0."""
    cdf = np.cumsum(np.asarray(nu0, dtype=float))
    cdf[-1] = 1.0
    fv = np.ascontiguousarray(f, dtype=float)
    chunks = [(s, min(CHUNK, n_paths - s)) for s in range(0, n_paths, CHUNK)]

    def run(chunk):
        first, count = chunk
        return _backend.simulate_time_averages(chain.rates, n, fv, cdf, float(t), int(seed), first, count)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros(0)


def deviation_table(chain: ReversibleChain, n: int, nu0, f, t: float, r_list: Sequence[float], n_paths: int,
                    C: float, seed: int = 0, workers: int = 1, mode: str = "l2",
                    budget: Optional[int] = None):
    """Estimates of P(time average of f - <f, mu^n> >= r) for each r, sharing one set of paths.

    The bound is ||d nu0/d mu^n||_2 exp(-t r^2 / C).
    """
    size = chain.size**n
    check_budget(size, budget)
    if t <= 0 or any(r <= 0 for r in r_list):
        raise ValueError("t and r must be positive")
    fv = as_weights(f, size)
    w0 = as_weights(nu0, size)
    dist = chain.space.dist if n == 1 else ProductMetric(chain.space, n, mode).matrix()
    lip = lipschitz_constant(fv, dist)
    if lip > 1.0 + 1e-12:
        raise NotLipschitz(f"observable has Lipschitz constant {lip:.6g} > 1 on the product metric")
    pi = product_stationary(chain.pi, n)
    factor = l2_factor(w0, pi)
    mean = float(pi @ fv)
    dev = simulate_averages(chain, n, w0, fv, t, n_paths, seed, workers) - mean
    out = []
    for r in r_list:
        k = int(np.count_nonzero(dev >= r))
        lo, hi = wilson_interval(k, n_paths)
        bound = factor * math.exp(-t * r * r / C)
        out.append(DeviationEstimate(float(r), float(t), n, k / n_paths, lo, hi, n_paths, bound, factor))
    return out


def deviation_probability(chain: ReversibleChain, n: int, nu0, f, t: float, r: float, n_paths: int, seed: int,
                          C: float, **kwargs) -> DeviationEstimate:
    return deviation_table(chain, n, nu0, f, t, [r], n_paths, C, seed=seed, **kwargs)[0]


def default_observable(chain: ReversibleChain, n: int) -> np.ndarray:
    """(1/sqrt(n)) sum_k g(x_k) with g the distance to state 0; 1-Lipschitz for l2."""
    g = chain.space.dist[0]
    t = np.indices((chain.size,) * n).reshape(n, -1)
    return g[t].sum(axis=0) / math.sqrt(n)
