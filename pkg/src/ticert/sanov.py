"""Finite-n checks of the Laplace principle for Feynman-Kac operator norms.

For a bounded functional F on P(E),

    (1/n) lograte_n(n F(L_n))  ->  sup_nu  F(nu) - I(nu | mu)

where lograte_n is the top of the spectrum of the n-fold product generator
plus the potential x -> n F(L_n(x)). Replacing I by the relative entropy
turns the left side into (1/n) log of the integral of exp(n F(L_n)) against
mu^n, which is Sanov's theorem in Laplace form.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .chain import ProbabilityVector, ReversibleChain, entropy_array, fisher_array, fisher_gradient, fisher_hessian
from .config import check_budget
from .errors import InvariantViolation, OptimizerStalled
from .optim import mirror_ascent, pattern_search, restart_points
from .spectral import fk_lograte_product, product_stationary
from .tensor import empirical_measures
from .transport import wasserstein_dist

ENUMERATION_LIMIT = 4096
TREND_SLACK = 1e-6


@dataclass(frozen=True)
class LaplaceFunctional:
    """A bounded functional on P(E).

    ``value`` acts on one probability vector. ``grad`` and ``hess`` are
    optional; without ``grad`` the right side is found by pattern search.
    """

    name: str
    value: Callable[[np.ndarray], float]
    bounds: tuple
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        lo, hi = self.bounds
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise InvariantViolation(f"functional {self.name!r} needs finite bounds, got {self.bounds}")

    @property
    def smooth(self) -> bool:
        return self.grad is not None

    def __call__(self, nu) -> float:
        return self.value(np.asarray(nu, dtype=float))

    def rows(self, measures: np.ndarray) -> np.ndarray:
        out = np.array([self.value(m) for m in measures], dtype=float)
        lo, hi = self.bounds
        if out.size and (out.min() < lo - 1e-9 or out.max() > hi + 1e-9):
            raise InvariantViolation(f"functional {self.name!r} left its declared bounds {self.bounds}")
        return out


def zero_functional() -> LaplaceFunctional:
    return LaplaceFunctional("zero", lambda nu: 0.0, (0.0, 0.0), lambda nu: np.zeros_like(nu),
                             lambda nu: np.zeros((nu.size, nu.size)))


def linear(f) -> LaplaceFunctional:
    fv = np.array(f, dtype=float)
    return LaplaceFunctional(
        "linear", lambda nu: float(fv @ nu), (float(fv.min()), float(fv.max())),
        lambda nu: fv.copy(), lambda nu: np.zeros((fv.size, fv.size)),
    )


def quadratic(f) -> LaplaceFunctional:
    """(<f, nu>)^2."""
    fv = np.array(f, dtype=float)
    lo, hi = float(fv.min()), float(fv.max())
    low = 0.0 if lo <= 0 <= hi else min(lo * lo, hi * hi)
    return LaplaceFunctional(
        "quadratic", lambda nu: float(fv @ nu) ** 2, (low, max(lo * lo, hi * hi)),
        lambda nu: 2.0 * float(fv @ nu) * fv, lambda nu: 2.0 * np.outer(fv, fv),
    )


def clipped_w2(dist, mu, M: float) -> LaplaceFunctional:
    """min(W2(mu, nu), M); 1-Lipschitz for W2 and bounded by M."""
    d = np.array(dist, dtype=float)
    m = np.array(mu, dtype=float)
    if M <= 0:
        raise ValueError("M must be positive")

    def value(nu):
        return min(wasserstein_dist(d, 2, nu, m)[0], M)

    return LaplaceFunctional("clipw2", value, (0.0, float(M)))


# ---------------------------------------------------------------------------
# the two sides


def lattice_values(F: LaplaceFunctional, base_size: int, n: int) -> np.ndarray:
    """F(L_n(x)) for every x in E^n, evaluating F once per empirical measure."""
    emp = empirical_measures(base_size, n)
    keys = np.rint(emp * n).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    vals = F.rows(uniq / n)
    return vals[inverse.reshape(-1)]


def laplace_lhs(chain: ReversibleChain, F: LaplaceFunctional, n: int, budget: Optional[int] = None) -> float:
    """(1/n) top eigenvalue of the product generator plus n F(L_n)."""
    check_budget(chain.size**n, budget)
    pot = n * lattice_values(F, chain.size, n)
    return fk_lograte_product(chain, n, pot, budget=budget) / n


def _multistart(value, grad, hess, mu, restarts, seed, tol):
    best = None
    for x0 in restart_points(mu, restarts, seed):
        if grad is not None:
            r = mirror_ascent(value, grad, x0, hess=hess, tol=tol)
        else:
            r = pattern_search(value, x0)
        if best is None or r.value > best.value:
            best = r
    return best


def laplace_rhs(chain: ReversibleChain, F: LaplaceFunctional, restarts: int = 16, seed: int = 0,
                tol: float = 1e-9):
    """sup_nu F(nu) - I(nu | mu) and a maximizer."""
    q, mu = chain.rates, chain.pi

    def value(nu):
        return F(nu) - fisher_array(q, mu, nu)

    grad = hess = None
    if F.smooth:
        def grad(nu):
            return F.grad(nu) - fisher_gradient(q, mu, nu)

        if F.hess is not None:
            def hess(nu):
                return F.hess(nu) - fisher_hessian(q, mu, nu)

    best = _multistart(value, grad, hess, mu, restarts, seed, tol)
    if F.smooth and not best.converged:
        raise OptimizerStalled(f"right side ascent stalled, gradient norm {best.grad_norm:.3g}",
                               best=best.x, grad_norm=best.grad_norm)
    return best.value, ProbabilityVector.normalized(best.x)


def lower_bound_gap(chain: ReversibleChain, F: LaplaceFunctional, n: int, nu, lhs: Optional[float] = None) -> float:
    """lhs(n) - (E_{nu^n} F(L_n) - I(nu | mu)); nonnegative for every nu.

    Testing the product measure nu^n in the variational formula for the
    product chain gives this bound; the integral is taken by enumeration.
    """
    check_budget(chain.size**n, ENUMERATION_LIMIT, "enumeration")
    w = np.asarray(nu, dtype=float)
    if lhs is None:
        lhs = laplace_lhs(chain, F, n)
    integral = float(product_stationary(w, n) @ lattice_values(F, chain.size, n))
    return lhs - (integral - fisher_array(chain.rates, chain.pi, w))


# ---------------------------------------------------------------------------
# entropy counterpart


def sanov_lhs(mu, F: LaplaceFunctional, n: int, budget: Optional[int] = None) -> float:
    """(1/n) log of the integral of exp(n F(L_n)) against mu^n."""
    m = np.asarray(mu, dtype=float)
    check_budget(m.size**n, budget)
    return float(logsumexp(n * lattice_values(F, m.size, n), b=product_stationary(m, n))) / n


def sanov_rhs(mu, F: LaplaceFunctional, restarts: int = 16, seed: int = 0, tol: float = 1e-9):
    """sup_nu F(nu) - H(nu | mu) and a maximizer."""
    m = np.asarray(mu, dtype=float)

    def value(nu):
        return F(nu) - entropy_array(nu, m)

    grad = hess = None
    if F.smooth:
        def grad(nu):
            return F.grad(nu) - np.log(np.maximum(nu, 1e-300) / m) - 1.0

        if F.hess is not None:
            def hess(nu):
                return F.hess(nu) - np.diag(1.0 / np.maximum(nu, 1e-300))

    best = _multistart(value, grad, hess, m, restarts, seed, tol)
    return best.value, ProbabilityVector.normalized(best.x)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class LaplaceRow:
    n: int
    lhs: float
    rhs: float
    wall_time_ms: float

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs


@dataclass
class LaplaceExperiment:
    chain: ReversibleChain
    F: LaplaceFunctional
    n_list: tuple
    t: float
    rhs: float
    maximizer: ProbabilityVector
    rate: str = "fisher"
    rows: List[LaplaceRow] = field(default_factory=list)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.rows])

    def lower_trend_ok(self, slack: float = TREND_SLACK) -> bool:
        """max(0, rhs - lhs(n)) is nonincreasing along n_list."""
        short = np.maximum(0.0, -self.gaps)
        return bool(np.all(np.diff(short) <= slack))

    def gap_shrinks(self) -> bool:
        g = np.abs(self.gaps)
        return bool(g[-1] < g[0])

    def to_csv(self, path, timing: bool = False) -> None:
        """Columns n, lhs, rhs, gap, wall_time_ms; times are 0 unless ``timing``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "lhs", "rhs", "gap", "wall_time_ms"])
            for r in self.rows:
                ms = round(r.wall_time_ms, 3) if timing else 0
                w.writerow([r.n, repr(r.lhs), repr(r.rhs), repr(r.gap), ms])


def convergence_experiment(chain: ReversibleChain, F: LaplaceFunctional, n_list: Sequence[int], t: float = 1.0,
                           budget: Optional[int] = None, rate: str = "fisher", seed: int = 0) -> LaplaceExperiment:
    """lhs(n) for each n against the variational right side.

    ``t`` is recorded only: the growth rate does not depend on it.
    ``rate="entropy"`` runs the Sanov counterpart instead.
    """
    n_list = tuple(int(n) for n in n_list)
    for n in n_list:
        check_budget(chain.size**n, budget)
    if rate == "fisher":
        rhs, arg = laplace_rhs(chain, F, seed=seed)
    elif rate == "entropy":
        rhs, arg = sanov_rhs(chain.pi, F, seed=seed)
    else:
        raise ValueError("rate must be 'fisher' or 'entropy'")
    exp = LaplaceExperiment(chain, F, n_list, float(t), rhs, arg, rate)
    for n in n_list:
        t0 = time.perf_counter()
        if rate == "fisher":
            lhs = laplace_lhs(chain, F, n, budget)
        else:
            lhs = sanov_lhs(chain.pi, F, n, budget)
        exp.rows.append(LaplaceRow(n, lhs, rhs, 1e3 * (time.perf_counter() - t0)))
    return exp


def builtin_functional(kind: str, chain: ReversibleChain, f=None, M: float = 1.0) -> LaplaceFunctional:
    """The command-line functionals; ``f`` defaults to (0, 2, 4, ...)."""
    fv = np.arange(chain.size, dtype=float) * 2.0 if f is None else np.asarray(f, dtype=float)
    if kind == "linear":
        return linear(fv)
    if kind == "quadratic":
        return quadratic(fv)
    if kind == "clipw2":
        return clipped_w2(chain.space.dist, chain.pi, M)
    if kind == "zero":
        return zero_functional()
    raise ValueError(f"unknown functional {kind!r}")
