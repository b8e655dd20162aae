"""Finite reversible Markov chains: metric spaces, generators, Dirichlet
form, Fisher information and relative entropy.

All objects are immutable once validated; arrays are stored read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, InvariantViolation, NotGenerator, NotIrreducible

STRUCT_TOL = 1e-12
DERIVED_TOL = 1e-10


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FiniteMetricSpace:
    labels: tuple
    dist: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "dist", _frozen(self.dist))
        d = self.dist
        n = len(self.labels)
        if d.shape != (n, n):
            raise DimensionMismatch(f"distance matrix has shape {d.shape}, expected ({n}, {n})")
        if self.validate:
            _check_metric(d)

    @property
    def size(self) -> int:
        return len(self.labels)

    @classmethod
    def discrete(cls, labels: Sequence[str]) -> "FiniteMetricSpace":
        n = len(labels)
        return cls(tuple(labels), 1.0 - np.eye(n))

    @classmethod
    def line(cls, labels: Sequence[str], spacing: float = 1.0) -> "FiniteMetricSpace":
        idx = np.arange(len(labels), dtype=float)
        return cls(tuple(labels), spacing * np.abs(idx[:, None] - idx[None, :]))


def _check_metric(d: np.ndarray) -> None:
    n = d.shape[0]
    if np.any(np.abs(np.diag(d)) > 0):
        raise InvariantViolation("metric: dist[x][x] must be 0")
    off = d[~np.eye(n, dtype=bool)]
    if off.size and off.min() <= 0:
        raise InvariantViolation("metric: dist[x][y] must be > 0 for x != y")
    asym = np.abs(d - d.T)
    if asym.max(initial=0.0) > STRUCT_TOL:
        x, y = np.unravel_index(np.argmax(asym), asym.shape)
        raise InvariantViolation(f"metric: not symmetric at ({x}, {y})")
    # d[x,z] <= d[x,y] + d[y,z], checked one pivot y at a time
    scale = max(1.0, float(d.max(initial=0.0)))
    for y in range(n):
        viol = d - (d[:, y][:, None] + d[y, :][None, :])
        if viol.max() > STRUCT_TOL * scale:
            x, z = np.unravel_index(np.argmax(viol), viol.shape)
            raise InvariantViolation(
                f"metric: triangle inequality fails for ({x}, {y}, {z}) by {viol[x, z]:.3g}"
            )


@dataclass(frozen=True)
class ProbabilityVector:
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1:
            raise DimensionMismatch("probability vector must be one-dimensional")
        if np.any(w < 0):
            raise InvariantViolation(f"probability vector has negative entry {w.min():.3g}")
        if abs(w.sum() - 1.0) > STRUCT_TOL:
            raise InvariantViolation(f"probability vector sums to {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return self.dim

    @classmethod
    def normalized(cls, w) -> "ProbabilityVector":
        w = np.clip(np.asarray(w, dtype=float), 0.0, None)
        return cls(w / w.sum())


@dataclass(frozen=True)
class ObservableFunction:
    values: np.ndarray
    lipschitz_bound: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def lipschitz_constant(self, space: FiniteMetricSpace) -> float:
        return lipschitz_constant(self.values, space.dist)

    def check_lipschitz(self, space: FiniteMetricSpace, tol: float = STRUCT_TOL) -> bool:
        if self.lipschitz_bound is None:
            return True
        return self.lipschitz_constant(space) <= self.lipschitz_bound + tol


def lipschitz_constant(values, dist) -> float:
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n < 2:
        return 0.0
    off = ~np.eye(n, dtype=bool)
    return float((np.abs(v[:, None] - v[None, :])[off] / np.asarray(dist)[off]).max())


def as_weights(nu, dim: Optional[int] = None) -> np.ndarray:
    w = np.asarray(nu, dtype=float)
    if w.ndim != 1:
        raise DimensionMismatch("expected a one-dimensional vector")
    if dim is not None and w.shape[0] != dim:
        raise DimensionMismatch(f"vector has {w.shape[0]} entries, expected {dim}")
    return w


# ---------------------------------------------------------------------------
# generators


def check_generator(rates) -> np.ndarray:
    q = np.asarray(rates, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise NotGenerator(f"rate matrix must be square, got shape {q.shape}")
    n = q.shape[0]
    off = q[~np.eye(n, dtype=bool)]
    if off.size and off.min() < 0:
        x, y = np.unravel_index(np.argmin(np.where(np.eye(n, dtype=bool), np.inf, q)), q.shape)
        raise NotGenerator(f"negative off-diagonal rate Q[{x}][{y}] = {q[x, y]:.6g}")
    rows = q.sum(axis=1)
    scale = max(1.0, float(np.abs(q).max(initial=0.0)))
    bad = np.flatnonzero(np.abs(rows) > STRUCT_TOL * scale)
    if bad.size:
        x = int(bad[np.argmax(np.abs(rows[bad]))])
        raise NotGenerator(f"row {x} sums to {rows[x]:.6g}")
    return q


def check_irreducible(q: np.ndarray) -> None:
    adj = (q > 0) & ~np.eye(q.shape[0], dtype=bool)
    ncomp, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    if ncomp != 1:
        raise NotIrreducible(f"rate graph has {ncomp} strongly connected components")


def stationary_distribution(rates) -> ProbabilityVector:
    """Solve mu Q = 0, sum(mu) = 1 for an irreducible conservative generator."""
    q = check_generator(rates)
    check_irreducible(q)
    n = q.shape[0]
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = np.linalg.solve(a, b)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    resid = np.abs(mu @ q).max()
    if resid > DERIVED_TOL:
        # one refinement step against the full system
        mu = mu - np.linalg.lstsq(np.vstack([q.T, np.ones(n)]), np.append(mu @ q, mu.sum() - 1), rcond=None)[0]
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
    return ProbabilityVector(mu)


@dataclass(frozen=True)
class ReversibleChain:
    space: FiniteMetricSpace
    rates: np.ndarray
    mu: ProbabilityVector

    def __post_init__(self):
        q = check_generator(self.rates)
        object.__setattr__(self, "rates", _frozen(q))
        if not isinstance(self.mu, ProbabilityVector):
            object.__setattr__(self, "mu", ProbabilityVector(self.mu))
        n = self.space.size
        if q.shape[0] != n or self.mu.dim != n:
            raise DimensionMismatch(
                f"space has {n} states, rates {q.shape[0]}, mu {self.mu.dim}"
            )
        check_irreducible(q)
        mu = self.mu.weights
        if mu.min() <= 0:
            raise InvariantViolation(f"mu must have full support; mu[{int(np.argmin(mu))}] = {mu.min():.3g}")
        flux = mu[:, None] * q
        viol = np.abs(flux - flux.T)
        if viol.max() > STRUCT_TOL:
            x, y = np.unravel_index(np.argmax(viol), viol.shape)
            raise InvariantViolation(
                f"detailed balance fails worst at ({x}, {y}): "
                f"mu[{x}]Q[{x}][{y}] = {flux[x, y]:.12g} vs mu[{y}]Q[{y}][{x}] = {flux[y, x]:.12g}"
            )

    @classmethod
    def from_rates(cls, rates, space: Optional[FiniteMetricSpace] = None, mu=None) -> "ReversibleChain":
        q = check_generator(rates)
        if space is None:
            space = FiniteMetricSpace.discrete([str(i) for i in range(q.shape[0])])
        if mu is None:
            mu = stationary_distribution(q)
        return cls(space, q, mu if isinstance(mu, ProbabilityVector) else ProbabilityVector(mu))

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def pi(self) -> np.ndarray:
        return self.mu.weights

    def symmetrized(self, potential=None) -> np.ndarray:
        """D^{1/2} (Q + diag f) D^{-1/2} with D = diag(mu); symmetric by detailed balance."""
        s = np.sqrt(self.pi)
        m = s[:, None] * self.rates / s[None, :]
        m = 0.5 * (m + m.T)
        if potential is not None:
            m = m + np.diag(np.asarray(potential, dtype=float))
        return m


# ---------------------------------------------------------------------------
# functionals on arrays, shared with the product-chain code


def dirichlet_array(q: np.ndarray, mu: np.ndarray, g: np.ndarray, h: Optional[np.ndarray] = None) -> float:
    dg = g[None, :] - g[:, None]
    dh = dg if h is None else h[None, :] - h[:, None]
    w = mu[:, None] * q
    np.fill_diagonal(w, 0.0)
    return 0.5 * float(np.sum(w * dg * dh))


def fisher_array(q: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> float:
    return dirichlet_array(q, mu, np.sqrt(np.clip(nu, 0.0, None) / mu))


def fisher_gradient(q: np.ndarray, mu: np.ndarray, nu: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    """dI/dnu_x = -(Q g)_x / g_x with g = sqrt(nu / mu)."""
    g = np.sqrt(np.maximum(nu, floor) / mu)
    return -(q @ g) / g


def fisher_hessian(q: np.ndarray, mu: np.ndarray, nu: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    g = np.sqrt(np.maximum(nu, floor) / mu)
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    h = -off / (2.0 * g[:, None] * (mu * g)[None, :])
    qg = q @ g
    diag_extra = qg / (2.0 * mu * g**3) - np.diag(q) / (2.0 * mu * g**2)
    h[np.diag_indices_from(h)] = diag_extra
    return 0.5 * (h + h.T)


def entropy_phi(r: np.ndarray) -> np.ndarray:
    """r log r - r + 1, accurate near r = 1 where the direct form cancels."""
    r = np.asarray(r, dtype=float)
    eps = r - 1.0
    out = np.empty_like(r)
    small = np.abs(eps) < 1e-2
    e = eps[small]
    # sum_{k>=2} (-1)^k e^k / (k (k - 1)); ten terms reach double precision here
    acc = np.zeros_like(e)
    for k in range(11, 1, -1):
        acc = e * acc + (-1.0) ** k / (k * (k - 1))
    out[small] = acc * e * e
    big = ~small
    rb = r[big]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[big] = np.where(rb > 0, rb * np.log(rb) - rb + 1.0, 1.0)
    return out


def entropy_array(nu: np.ndarray, mu: np.ndarray) -> float:
    """sum nu log(nu / mu) for normalized inputs, evaluated as sum mu phi(nu / mu).

    The phi form drops the term sum(nu - mu), which is zero in exact
    arithmetic; keeping its rounding error would swamp H near mu.
    """
    pos = nu > 0
    if np.any(mu[pos] <= 0):
        return float("inf")
    m = mu > 0
    return float(np.sum(mu[m] * entropy_phi(nu[m] / mu[m])))


# ---------------------------------------------------------------------------
# public operations


def dirichlet_form(chain: ReversibleChain, g, h=None) -> float:
    """E(g, h) = 1/2 sum_{x,y} mu_x Q_xy (g_y - g_x)(h_y - h_x)."""
    gv = as_weights(g, chain.size)
    hv = None if h is None else as_weights(h, chain.size)
    return dirichlet_array(chain.rates, chain.pi, gv, hv)


def fisher_information(chain: ReversibleChain, nu) -> float:
    w = as_weights(nu, chain.size)
    return fisher_array(chain.rates, chain.pi, w)


def relative_entropy(nu, mu) -> float:
    """H(nu | mu) with 0 log 0 = 0; +inf when nu is not absolutely continuous."""
    a = as_weights(nu)
    b = as_weights(mu, a.shape[0])
    return entropy_array(a, b)
