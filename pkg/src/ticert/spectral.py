"""Growth rates of Feynman-Kac semigroups.

For a reversible chain the L2(mu) operator norm of exp(t(Q + diag f)) is
exp(t * lambda_max) where lambda_max is the top eigenvalue of the
symmetrized matrix D^{1/2}(Q + diag f)D^{-1/2}. Three independent routes
are provided: a symmetric eigensolve, the variational (Donsker-Varadhan
type) maximization over the simplex, and an explicit matrix exponential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import ReversibleChain, as_weights, fisher_array, fisher_gradient, fisher_hessian
from .config import check_budget
from .errors import BudgetExceeded, DimensionMismatch, EigenFailure, OptimizerStalled
from .optim import mirror_ascent, restart_points

DENSE_LIMIT = 512
EXPM_LIMIT = 64
LANCZOS_TOL = 1e-7


@dataclass(frozen=True)
class FeynmanKacOperator:
    chain: ReversibleChain
    potential: np.ndarray

    def symmetrized(self) -> np.ndarray:
        return self.chain.symmetrized(self.potential)

    def lograte(self) -> float:
        return fk_lograte(self.chain, self.potential)


def _potential(chain: ReversibleChain, f) -> np.ndarray:
    return as_weights(np.asarray(f, dtype=float), chain.size)


def fk_lograte(chain: ReversibleChain, f) -> float:
    """lambda_max(Q + diag f) = (1/t) log ||P_t^f||_{L2(mu)} for every t > 0."""
    fv = _potential(chain, f)
    if chain.size <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(chain.symmetrized(fv))[-1])
    s = chain.symmetrized()
    lam, _ = lanczos_top(lambda v: s @ v + fv * v, np.sqrt(chain.pi))
    return lam


def fk_lograte_batch(chain: ReversibleChain, potentials) -> np.ndarray:
    """fk_lograte for each row of ``potentials``."""
    p = np.atleast_2d(np.asarray(potentials, dtype=float))
    if p.shape[1] != chain.size:
        raise DimensionMismatch(f"potentials have {p.shape[1]} columns, expected {chain.size}")
    s = chain.symmetrized()
    mats = np.broadcast_to(s, (p.shape[0],) + s.shape).copy()
    idx = np.arange(chain.size)
    mats[:, idx, idx] += p
    return np.linalg.eigvalsh(mats)[:, -1]


def fk_top_eigenvector(chain: ReversibleChain, f):
    """Top eigenpair of the symmetrized operator, sign-normalized to sum > 0."""
    w, v = np.linalg.eigh(chain.symmetrized(_potential(chain, f)))
    vec = v[:, -1]
    if vec.sum() < 0:
        vec = -vec
    return float(w[-1]), vec


def variational_objective(chain: ReversibleChain, f, g) -> float:
    """int f g^2 dmu - E(g, g) for g normalized in L2(mu)."""
    from .chain import dirichlet_form

    g = np.asarray(g, dtype=float)
    mu = chain.pi
    g = g / math.sqrt(float(mu @ g**2))
    return float(mu @ (np.asarray(f) * g**2)) - dirichlet_form(chain, g)


# ---------------------------------------------------------------------------
# dual route: sup over nu of  <f, nu> - I(nu | mu)


def maximize_fisher_dual(q: np.ndarray, mu: np.ndarray, f: np.ndarray, restarts: int = 16,
                         seed: int = 0, tol: float = 1e-8, extra_starts=()):
    """sup_nu <f, nu> - I(nu|mu) for a dense reversible generator ``q``."""

    def value(nu):
        return float(f @ nu) - fisher_array(q, mu, nu)

    def grad(nu):
        return f - fisher_gradient(q, mu, nu)

    def hess(nu):
        return -fisher_hessian(q, mu, nu)

    best = None
    for x0 in list(extra_starts) + restart_points(mu, restarts, seed):
        res = mirror_ascent(value, grad, x0, hess=hess, tol=tol)
        if best is None or res.value > best.value:
            best = res
    return best


def fk_lograte_dual(chain: ReversibleChain, f, restarts: int = 16, seed: int = 0, tol: float = 1e-8):
    """Variational value sup_nu (int f dnu - I(nu|mu)) and its maximizer."""
    from .chain import ProbabilityVector

    fv = _potential(chain, f)
    if np.ptp(fv) == 0:
        return float(fv[0]), chain.mu
    best = maximize_fisher_dual(chain.rates, chain.pi, fv, restarts=restarts, seed=seed, tol=tol)
    if not best.converged:
        raise OptimizerStalled(
            f"simplex ascent stalled, gradient norm {best.grad_norm:.3g}", best=best.x, grad_norm=best.grad_norm
        )
    return best.value, ProbabilityVector.normalized(best.x)


# ---------------------------------------------------------------------------
# matrix-exponential route


def expm_symmetric(a: np.ndarray) -> np.ndarray:
    """exp(a) by scaling and squaring with a degree-24 Taylor polynomial."""
    a = np.asarray(a, dtype=float)
    norm = np.abs(a).sum(axis=1).max(initial=0.0)
    s = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    b = a / (2.0**s)
    n = a.shape[0]
    term = np.eye(n)
    out = np.eye(n)
    for k in range(1, 25):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def log_spectral_norm(m: np.ndarray, squarings: int = 60) -> float:
    """log ||m||_2 via repeated squaring of m^T m with Frobenius rescaling."""
    b = m.T @ m
    fro = np.linalg.norm(b)
    if fro == 0:
        return -math.inf
    b = b / fro
    logscale = math.log(fro)
    for _ in range(squarings):
        b = b @ b
        s = np.linalg.norm(b)
        b = b / s
        logscale = 2.0 * logscale + math.log(s)
    # logscale / 2^k -> log lambda_max(m^T m) = 2 log ||m||
    return 0.5 * logscale / (2.0**squarings)


def fk_opnorm_expm(chain: ReversibleChain, f, t: float) -> float:
    """(1/t) log of the L2(mu) norm of exp(t(Q + diag f))."""
    if t <= 0:
        raise ValueError("t must be positive")
    if chain.size > EXPM_LIMIT:
        raise BudgetExceeded(f"dense exponential limited to {EXPM_LIMIT} states, chain has {chain.size}")
    s = chain.symmetrized(_potential(chain, f))
    return log_spectral_norm(expm_symmetric(t * s)) / t


def weighted_opnorm(chain: ReversibleChain, f, t: float) -> float:
    """Same quantity from the unsymmetrized exponential, conjugated into L2(mu)."""
    a = chain.rates + np.diag(_potential(chain, f))
    e = expm_symmetric(t * a)
    r = np.sqrt(chain.pi)
    return log_spectral_norm(r[:, None] * e / r[None, :]) / t


# ---------------------------------------------------------------------------
# n-fold product, matrix-free


def kron_sum_apply(s: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Apply sum_k I x .. x s x .. x I to a flat vector on E^n (row-major)."""
    e = s.shape[0]
    t = v.reshape((e,) * n)
    out = np.zeros_like(t)
    for k in range(n):
        out += np.moveaxis(np.tensordot(s, t, axes=([1], [k])), 0, k)
    return out.reshape(-1)


def lanczos_top(apply, start: np.ndarray, tol: float = LANCZOS_TOL, max_basis: int = 200,
                max_restarts: int = 50):
    """Top eigenpair of a symmetric operator via Lanczos with full
    reorthogonalization and explicit restarts from the Ritz vector."""
    dim = start.shape[0]
    q = np.asarray(start, dtype=float)
    q = q / np.linalg.norm(q)
    m_max = min(dim, max_basis)
    lam = None
    for _ in range(max_restarts):
        basis = np.zeros((m_max, dim))
        alphas = []
        betas = []
        basis[0] = q
        w = apply(q)
        resid = math.inf
        ritz = None
        for j in range(m_max):
            alpha = float(basis[j] @ w)
            alphas.append(alpha)
            w = w - alpha * basis[j]
            if j > 0:
                w = w - betas[-1] * basis[j - 1]
            # two passes of Gram-Schmidt keep the basis orthogonal
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            w -= basis[: j + 1].T @ (basis[: j + 1] @ w)
            beta = float(np.linalg.norm(w))
            tmat = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
            evals, evecs = np.linalg.eigh(tmat)
            lam = float(evals[-1])
            ritz = evecs[:, -1]
            resid = beta * abs(ritz[-1])
            if resid <= tol or beta < 1e-14 or j == m_max - 1:
                break
            betas.append(beta)
            basis[j + 1] = w / beta
            w = apply(basis[j + 1])
        vec = basis[: len(alphas)].T @ ritz
        vec /= np.linalg.norm(vec)
        true_resid = float(np.linalg.norm(apply(vec) - lam * vec))
        if true_resid <= tol:
            if vec.sum() < 0:
                vec = -vec
            return lam, vec
        q = vec
    raise EigenFailure(f"Lanczos residual {true_resid:.3g} above {tol}")


def product_stationary(mu: np.ndarray, n: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(n):
        out = np.kron(out, mu)
    return out


def fk_lograte_product(chain: ReversibleChain, n: int, potential, budget: Optional[int] = None,
                       return_vector: bool = False):
    """lambda_max of (Kronecker sum of Q over n factors) + diag(potential)."""
    size = chain.size**n
    check_budget(size, budget)
    pot = np.asarray(potential, dtype=float).reshape(-1)
    if pot.shape[0] != size:
        raise DimensionMismatch(f"potential has {pot.shape[0]} entries, expected {size}")
    s = chain.symmetrized()
    start = np.sqrt(product_stationary(chain.pi, n))
    lam, vec = lanczos_top(lambda v: kron_sum_apply(s, v, n) + pot * v, start)
    return (lam, vec) if return_vector else lam
