"""Product chains, empirical measures and tensorized functionals.

States of E^n are flattened row-major (the last coordinate varies fastest),
so a measure on E^n is a flat vector that reshapes to an n-dimensional
array with one axis per coordinate.

Two lifts of a functional alpha on P(E) to P(E^n) are provided:

* UNORDERED: sum_k E_nu[alpha(nu_{-k}(x_{-k}))], leave-one-out conditionals.
* ORDERED:   sum_k E_nu[alpha(nu_{k-1,k}(x_1..x_{k-1}))], sequential ones.

Conditionals on zero-probability events are replaced by mu.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .chain import ProbabilityVector, ReversibleChain, as_weights, entropy_array, entropy_phi
from .config import check_budget
from .errors import BudgetExceeded, DimensionMismatch, IndexOutOfRange, InvariantViolation, OptimizerStalled
from .optim import mirror_ascent, restart_points
from .spectral import fk_lograte_product, maximize_fisher_dual, product_stationary
from .transport import product_tuples

ASCENT_LIMIT = 256
FD_HESSIAN_LIMIT = 81
DENSE_PRODUCT_LIMIT = 4096
CROSS_CHECK_TOL = 1e-6


class Variant(enum.Enum):
    UNORDERED = "unordered"
    ORDERED = "ordered"


# ---------------------------------------------------------------------------
# product chains


@dataclass(frozen=True)
class ProductChain:
    base: ReversibleChain
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def base_size(self) -> int:
        return self.base.size

    @property
    def size(self) -> int:
        return self.base.size**self.n

    @property
    def shape(self):
        return (self.base.size,) * self.n

    def encode(self, tup) -> int:
        t = np.asarray(tup, dtype=np.int64)
        if t.shape != (self.n,):
            raise DimensionMismatch(f"tuple has length {t.size}, expected {self.n}")
        if t.min() < 0 or t.max() >= self.base.size:
            raise IndexOutOfRange(f"tuple {tuple(t)} has entries outside 0..{self.base.size - 1}")
        return int(np.ravel_multi_index(tuple(t), self.shape))

    def decode(self, index: int) -> tuple:
        if not 0 <= index < self.size:
            raise IndexOutOfRange(f"flat index {index} outside 0..{self.size - 1}")
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    def tuples(self) -> np.ndarray:
        return product_tuples(self.base.size, self.n)

    @property
    def pi(self) -> np.ndarray:
        return product_stationary(self.base.pi, self.n)

    def generator(self, budget: Optional[int] = None) -> np.ndarray:
        """Dense Kronecker-sum generator; only for small products."""
        check_budget(self.size, budget if budget is not None else DENSE_PRODUCT_LIMIT, "dense product generator")
        e = self.base.size
        q = self.base.rates
        out = np.zeros((self.size, self.size))
        for k in range(self.n):
            out += np.kron(np.kron(np.eye(e**k), q), np.eye(e ** (self.n - k - 1)))
        return out

    def check_detailed_balance(self, tol: float = 1e-12) -> float:
        q = self.generator()
        flux = self.pi[:, None] * q
        worst = float(np.abs(flux - flux.T).max())
        if worst > tol:
            raise InvariantViolation(f"product detailed balance off by {worst:.3g}")
        return worst


def empirical_measure(tup, base_size: int) -> ProbabilityVector:
    t = np.asarray(tup, dtype=np.int64).reshape(-1)
    if t.size == 0:
        raise DimensionMismatch("empty tuple")
    if t.min() < 0 or t.max() >= base_size:
        raise IndexOutOfRange(f"tuple entries must lie in 0..{base_size - 1}")
    return ProbabilityVector(np.bincount(t, minlength=base_size) / t.size)


def empirical_measures(base_size: int, n: int) -> np.ndarray:
    """Empirical measure of every point of E^n, one row per flat index."""
    t = product_tuples(base_size, n)
    counts = np.zeros((t.shape[0], base_size))
    for k in range(n):
        counts[np.arange(t.shape[0]), t[:, k]] += 1.0
    return counts / n


# ---------------------------------------------------------------------------
# Fisher information on E^n


def _as_product_measure(pc: ProductChain, nu) -> np.ndarray:
    w = as_weights(nu)
    if w.shape[0] != pc.size:
        raise DimensionMismatch(f"measure has {w.shape[0]} atoms, product space has {pc.size}")
    return w


def fisher_information_product(pc: ProductChain, nu) -> float:
    """Sum-form Dirichlet energy of sqrt(dnu/dmu^n); one coordinate moves per jump."""
    w = _as_product_measure(pc, nu)
    pi = pc.pi
    g = np.sqrt(np.clip(w, 0.0, None) / pi).reshape(pc.shape)
    p = pi.reshape(pc.shape)
    rates = pc.base.rates.copy()
    np.fill_diagonal(rates, 0.0)
    e = pc.base_size
    total = 0.0
    for k in range(pc.n):
        gk = np.moveaxis(g, k, 0).reshape(e, -1)
        pk = np.moveaxis(p, k, 0).reshape(e, -1)
        diff = gk[None, :, :] - gk[:, None, :]
        total += 0.5 * float(np.sum(pk[:, None, :] * rates[:, :, None] * diff**2))
    return total


def leave_one_out(nu_arr: np.ndarray, k: int, mu: np.ndarray):
    """Marginal of x_{-k} and the conditional law of x_k, rows indexed by x_{-k}."""
    e = mu.shape[0]
    v = np.moveaxis(nu_arr, k, -1).reshape(-1, e)
    m = v.sum(axis=1)
    cond = np.tile(mu, (v.shape[0], 1))
    pos = m > 0
    cond[pos] = v[pos] / m[pos, None]
    return m, cond


def sequential(nu_arr: np.ndarray, k: int, mu: np.ndarray):
    """Marginal of (x_1..x_{k-1}) and the conditional law of x_k (k is 0-based)."""
    e = mu.shape[0]
    n = nu_arr.ndim
    u = nu_arr.sum(axis=tuple(range(k + 1, n))) if k + 1 < n else nu_arr
    u = u.reshape(-1, e)
    m = u.sum(axis=1)
    cond = np.tile(mu, (u.shape[0], 1))
    pos = m > 0
    cond[pos] = u[pos] / m[pos, None]
    return m, cond


def chain_rule_decomposition(pc: ProductChain, nu) -> float:
    """sum_k integral of I(nu_{-k}(x_{-k}) | mu) against nu."""
    w = _as_product_measure(pc, nu)
    fisher = Functional.fisher(pc.base)
    arr = w.reshape(pc.shape)
    total = 0.0
    for k in range(pc.n):
        m, cond = leave_one_out(arr, k, pc.base.pi)
        total += float(m @ fisher.values(cond))
    return total


# ---------------------------------------------------------------------------
# functionals on P(E), evaluated row-wise


def _fisher_rows(q, mu):
    w = mu[:, None] * q
    np.fill_diagonal(w, 0.0)
    deg = w.sum(axis=1)

    def values(c):
        g = np.sqrt(np.clip(c, 0.0, None) / mu)
        return (g**2) @ deg - np.einsum("rx,xy,ry->r", g, w, g)

    def grads(c, floor=1e-14):
        g = np.sqrt(np.maximum(c, floor) / mu)
        return -(g @ q.T) / g

    return values, grads


def _entropy_rows(mu):
    def values(c):
        return (entropy_phi(c / mu) * mu).sum(axis=1)

    def grads(c, floor=1e-300):
        return np.log(np.maximum(c, floor) / mu) + 1.0

    return values, grads


@dataclass(frozen=True)
class Functional:
    """A functional alpha on P(E) with a row-vectorized value and gradient.

    ``values(c)`` maps an (R, E) array of probability vectors to R values;
    ``grads(c)`` returns the (R, E) gradients.
    """

    tag: str
    mu: np.ndarray
    values: Callable = field(repr=False)
    grads: Callable = field(repr=False)
    chain: Optional[ReversibleChain] = field(default=None, repr=False)

    @classmethod
    def fisher(cls, chain: ReversibleChain) -> "Functional":
        v, g = _fisher_rows(chain.rates, chain.pi)
        return cls("FISHER", chain.pi, v, g, chain)

    @classmethod
    def entropy(cls, mu) -> "Functional":
        m = np.asarray(mu, dtype=float)
        v, g = _entropy_rows(m)
        return cls("ENTROPY", m, v, g)

    @classmethod
    def custom(cls, mu, value: Callable, grad: Callable, samples: int = 256, seed: int = 0) -> "Functional":
        """User evaluator on single vectors; boundedness below is only sampled."""
        m = np.asarray(mu, dtype=float)

        def values(c):
            return np.array([value(row) for row in c], dtype=float)

        def grads(c):
            return np.array([grad(row) for row in c], dtype=float)

        probe = np.random.default_rng(seed).dirichlet(np.ones(m.shape[0]), size=samples)
        vals = values(probe)
        if not np.all(np.isfinite(vals)):
            raise InvariantViolation("custom functional is not finite on sampled measures")
        return cls("CUSTOM", m, values, grads)

    def __call__(self, nu) -> float:
        return float(self.values(np.asarray(nu, dtype=float)[None, :])[0])


def _resolve(functional, chain: Optional[ReversibleChain] = None) -> Functional:
    if isinstance(functional, Functional):
        return functional
    tag = str(functional).upper()
    if chain is None:
        raise ValueError(f"functional tag {tag!r} needs a chain")
    if tag == "FISHER":
        return Functional.fisher(chain)
    if tag == "ENTROPY":
        return Functional.entropy(chain.pi)
    raise ValueError(f"unknown functional tag {functional!r}")


def _terms(func: Functional, variant: Variant, arr: np.ndarray):
    split = leave_one_out if variant is Variant.UNORDERED else sequential
    for k in range(arr.ndim):
        yield k, split(arr, k, func.mu)


def tensorize(functional, variant, n: int, nu, chain: Optional[ReversibleChain] = None) -> float:
    """alpha_n(nu) (UNORDERED) or its ordered counterpart (ORDERED)."""
    func = _resolve(functional, chain)
    variant = Variant(variant) if not isinstance(variant, Variant) else variant
    e = func.mu.shape[0]
    w = as_weights(nu)
    if w.shape[0] != e**n:
        raise DimensionMismatch(f"measure has {w.shape[0]} atoms, expected {e ** n}")
    arr = w.reshape((e,) * n)
    return float(sum(m @ func.values(c) for _, (m, c) in _terms(func, variant, arr)))


def tensorize_gradient(func: Functional, variant: Variant, n: int, nu: np.ndarray) -> np.ndarray:
    """Gradient of the tensorized functional in the flat coordinates of nu.

    Each term is a perspective m * alpha(u / m), whose derivative in u_a is
    alpha(c) + grad(c)_a - <grad(c), c>.
    """
    e = func.mu.shape[0]
    arr = np.asarray(nu, dtype=float).reshape((e,) * n)
    out = np.zeros_like(arr)
    for k, (m, c) in _terms(func, variant, arr):
        gr = func.grads(c)
        d = func.values(c)[:, None] + gr - np.sum(gr * c, axis=1, keepdims=True)
        if variant is Variant.UNORDERED:
            rest = tuple(np.delete(np.array(arr.shape), k))
            out += np.moveaxis(d.reshape(rest + (e,)), -1, k)
        else:
            d = d.reshape((e,) * (k + 1) + (1,) * (n - k - 1))
            out += d
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# convex conjugates


@dataclass
class ConjugateResult:
    value: float
    maximizer: Optional[np.ndarray]
    method: str


def _lse(f: np.ndarray, pi: np.ndarray) -> float:
    return float(logsumexp(f, b=pi))


def rho_conjugate(functional, variant, n: int, f, chain: Optional[ReversibleChain] = None,
                  restarts: int = 4, seed: int = 0, tol: float = 1e-9, budget: Optional[int] = None,
                  warm_start=None, full: bool = False):
    """sup over nu in P(E^n) of <f, nu> minus the tensorized functional.

    Ascent is used up to 256 product states. Beyond that the UNORDERED Fisher
    case goes to the product eigensolve and the ORDERED entropy case to the
    log-sum-exp formula; anything else raises BudgetExceeded.
    """
    func = _resolve(functional, chain)
    variant = Variant(variant) if not isinstance(variant, Variant) else variant
    e = func.mu.shape[0]
    size = e**n
    fv = np.asarray(f, dtype=float).reshape(-1)
    if fv.shape[0] != size:
        raise DimensionMismatch(f"f has {fv.shape[0]} entries, expected {size}")
    check_budget(size, budget)
    pi = product_stationary(func.mu, n)

    if size > ASCENT_LIMIT:
        if func.tag == "FISHER" and variant is Variant.UNORDERED:
            res = ConjugateResult(fk_lograte_product(func.chain, n, fv, budget=budget), None, "eigensolve")
        elif func.tag == "ENTROPY" and variant is Variant.ORDERED:
            res = ConjugateResult(_lse(fv, pi), None, "log-sum-exp")
        else:
            raise BudgetExceeded(f"conjugate ascent limited to {ASCENT_LIMIT} product states, got {size}")
        return res if full else res.value

    if func.tag == "FISHER" and variant is Variant.UNORDERED:
        # the unordered Fisher lift is I(. | mu^n) itself
        q = ProductChain(func.chain, n).generator()
        starts = [] if warm_start is None else [np.asarray(warm_start, dtype=float)]
        best = maximize_fisher_dual(q, pi, fv, restarts=restarts, seed=seed, tol=tol, extra_starts=starts)
        if not best.converged:
            raise OptimizerStalled(
                f"conjugate ascent stalled, gradient norm {best.grad_norm:.3g}", best=best.x, grad_norm=best.grad_norm
            )
        lam = fk_lograte_product(func.chain, n, fv, budget=budget)
        if abs(lam - best.value) > CROSS_CHECK_TOL:
            raise OptimizerStalled(
                f"ascent value {best.value:.10g} disagrees with eigensolve {lam:.10g}", best=best.x,
                grad_norm=best.grad_norm,
            )
        res = ConjugateResult(best.value, best.x, "ascent")
        return res if full else res.value

    def value(x):
        return float(fv @ x) - tensorize(func, variant, n, x)

    def grad(x):
        return fv - tensorize_gradient(func, variant, n, x)

    hess = _fd_hessian(grad) if size <= FD_HESSIAN_LIMIT else None
    starts = [] if warm_start is None else [np.asarray(warm_start, dtype=float)]
    if func.tag in ("FISHER", "ENTROPY") and variant is Variant.ORDERED:
        # the unordered maximizer is a feasible start with a value no larger,
        # so the ordered supremum found here can only be higher
        other = rho_conjugate(func, Variant.UNORDERED, n, fv, restarts=restarts, seed=seed, tol=tol,
                              budget=budget, full=True)
        if other.maximizer is not None:
            starts.append(other.maximizer)
    best = None
    for x0 in starts + restart_points(pi, restarts, seed):
        r = mirror_ascent(value, grad, x0, hess=hess, tol=tol, max_iter=5000)
        if best is None or r.value > best.value:
            best = r
    res = ConjugateResult(best.value, best.x, "ascent")
    return res if full else res.value


def _fd_hessian(grad, rel: float = 1e-6):
    """Central differences of an analytic gradient; steps scale with each atom."""

    def hess(x):
        size = x.shape[0]
        h = np.empty((size, size))
        for i in range(size):
            step = rel * max(x[i], 1e-3)
            e = np.zeros(size)
            e[i] = step
            h[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * step)
        return 0.5 * (h + h.T)

    return hess


def gibbs_value(mu, n: int, f) -> float:
    """log of the integral of e^f against mu^n."""
    return _lse(np.asarray(f, dtype=float).reshape(-1), product_stationary(np.asarray(mu, dtype=float), n))


def product_measure(nu, n: int) -> np.ndarray:
    return product_stationary(np.asarray(nu, dtype=float), n)


def relative_entropy_product(nu, mu, n: int) -> float:
    return entropy_array(np.asarray(nu, dtype=float), product_stationary(np.asarray(mu, dtype=float), n))
