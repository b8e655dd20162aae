"""Exact Wasserstein distances on finite metric spaces.

The primal transport problem is solved by network simplex on the
bipartite graph (compiled kernel when available). The W1 Kantorovich dual
is solved separately as an LP over potentials, so primal/dual agreement is a
genuine two-route check.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from . import _backend
from .chain import FiniteMetricSpace, ObservableFunction, ProbabilityVector, as_weights
from .config import check_budget
from .errors import DimensionMismatch, TransportFailure

GAP_TOL = 1e-9
MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class TransportPlan:
    plan: np.ndarray
    source_marginal: ProbabilityVector
    target_marginal: ProbabilityVector
    cost: float
    p: int
    duality_gap: float = 0.0
    solver: str = "network-simplex"

    def check(self, dist: np.ndarray) -> None:
        rows = self.plan.sum(axis=1)
        cols = self.plan.sum(axis=0)
        if np.abs(rows - self.source_marginal.weights).max() > MARGINAL_TOL:
            raise TransportFailure("plan row sums differ from source marginal")
        if np.abs(cols - self.target_marginal.weights).max() > MARGINAL_TOL:
            raise TransportFailure("plan column sums differ from target marginal")
        if abs(float(np.sum(self.plan * dist**self.p)) - self.cost) > GAP_TOL:
            raise TransportFailure("plan cost inconsistent")

    def to_csv(self, path) -> None:
        """Write nonzero entries as (x_index, y_index, mass) rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_index", "y_index", "mass"])
            for x, y in zip(*np.nonzero(self.plan)):
                w.writerow([int(x), int(y), repr(float(self.plan[x, y]))])


def _highs_transport(a, b, cost):
    m, n = cost.shape
    a_eq = np.vstack([np.kron(np.eye(m), np.ones(n)), np.kron(np.ones(m), np.eye(n))])
    res = linprog(
        cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise TransportFailure(f"fallback LP failed: {res.message}")
    u = res.eqlin.marginals[:m]
    return res.x.reshape(m, n), u


def solve_transport(a, b, cost):
    """Min-cost coupling of positive marginals ``a``, ``b``.

    Returns ``(plan, cost_value, u, v, gap, solver)`` where ``(u, v)`` is a
    dual-feasible pair (c-transform of the simplex row potentials) and
    ``gap`` the primal/dual difference.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.ascontiguousarray(cost, dtype=float)
    m, n = cost.shape
    max_iter = 50 * (m + n) ** 2 + 1000
    plan, u, _v, _it, status = _backend.transport_simplex(a, b, cost, max_iter)
    solver = f"network-simplex[{_backend.BACKEND}]"
    if status != 0:
        plan, u = _highs_transport(a, b, cost)
        solver = "highs"
    value = float(np.sum(plan * cost))
    v = np.min(cost - u[:, None], axis=0)
    dual = float(a @ u + b @ v)
    gap = value - dual
    if gap > GAP_TOL and solver != "highs":
        plan, u = _highs_transport(a, b, cost)
        solver = "highs"
        value = float(np.sum(plan * cost))
        v = np.min(cost - u[:, None], axis=0)
        dual = float(a @ u + b @ v)
        gap = value - dual
    if gap > GAP_TOL:
        raise TransportFailure(f"duality gap {gap:.3g} exceeds {GAP_TOL}")
    return plan, value, u, v, gap, solver


def wasserstein(space: FiniteMetricSpace, p: int, nu, mu):
    """W_p(nu, mu) and an optimal coupling (rows indexed by nu)."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    return wasserstein_dist(space.dist, p, nu, mu)


def wasserstein_dist(dist, p: int, nu, mu):
    dist = np.asarray(dist, dtype=float)
    n_states = dist.shape[0]
    a = as_weights(nu, n_states)
    b = as_weights(mu, n_states)
    src = np.flatnonzero(a > 0)
    dst = np.flatnonzero(b > 0)
    cost = (dist**p)[np.ix_(src, dst)]
    sub, value, _u, _v, gap, solver = solve_transport(a[src], b[dst], cost)
    plan = np.zeros((n_states, n_states))
    plan[np.ix_(src, dst)] = sub
    value = max(value, 0.0)
    tp = TransportPlan(
        plan, ProbabilityVector.normalized(a), ProbabilityVector.normalized(b), value, p, gap, solver
    )
    return value ** (1.0 / p), tp


def wasserstein_value(dist, p: int, nu, mu) -> float:
    return wasserstein_dist(dist, p, nu, mu)[0]


def _mcshane(f: np.ndarray, dist: np.ndarray) -> np.ndarray:
    return np.min(f[None, :] + dist, axis=1)


def kantorovich_dual(space: FiniteMetricSpace, nu, mu):
    """max over 1-Lipschitz f of  sum f (nu - mu), with an optimal potential."""
    return kantorovich_dual_dist(space.dist, nu, mu)


def kantorovich_dual_dist(dist, nu, mu):
    dist = np.asarray(dist, dtype=float)
    n = dist.shape[0]
    w = as_weights(nu, n) - as_weights(mu, n)
    if n == 1 or np.abs(w).max() == 0:
        return 0.0, ObservableFunction(np.zeros(n), lipschitz_bound=1.0)
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    a_ub = np.zeros((ii.size, n))
    a_ub[np.arange(ii.size), ii] = 1.0
    a_ub[np.arange(ii.size), jj] = -1.0
    bounds = [(0.0, 0.0)] + [(None, None)] * (n - 1)
    res = linprog(
        -w, A_ub=a_ub, b_ub=dist[ii, jj], bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise TransportFailure(f"Kantorovich dual LP failed: {res.message}")
    f = _mcshane(res.x, dist)
    f = f - f[0]
    return float(f @ w), ObservableFunction(f, lipschitz_bound=1.0)


# ---------------------------------------------------------------------------
# product metrics


@dataclass(frozen=True)
class ProductMetric:
    base: FiniteMetricSpace
    n: int
    mode: str = "l2"

    def __post_init__(self):
        if self.mode not in ("l2", "l1"):
            raise ValueError("mode must be 'l2' or 'l1'")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    def tuples(self) -> np.ndarray:
        return product_tuples(self.base.size, self.n)

    def distance(self, x, y) -> float:
        d = self.base.dist[np.asarray(x), np.asarray(y)]
        return float(np.sqrt(np.sum(d**2))) if self.mode == "l2" else float(np.sum(d))

    def matrix(self) -> np.ndarray:
        t = self.tuples()
        d = self.base.dist
        acc = np.zeros((t.shape[0], t.shape[0]))
        for k in range(self.n):
            block = d[t[:, k][:, None], t[:, k][None, :]]
            acc += block**2 if self.mode == "l2" else block
        return np.sqrt(acc) if self.mode == "l2" else acc


def product_tuples(size: int, n: int) -> np.ndarray:
    """Row-major enumeration of E^n: the last coordinate varies fastest."""
    grids = np.indices((size,) * n).reshape(n, -1).T
    return np.ascontiguousarray(grids)


def product_space(space: FiniteMetricSpace, n: int, mode: str = "l2", budget: Optional[int] = None) -> FiniteMetricSpace:
    check_budget(space.size**n, budget)
    metric = ProductMetric(space, n, mode)
    labels = [
        "(" + ",".join(space.labels[i] for i in combo) + ")"
        for combo in itertools.product(range(space.size), repeat=n)
    ]
    if n == 1:
        labels = list(space.labels)
    # l1/l2 products of a metric are metrics; skip the cubic re-validation
    return FiniteMetricSpace(tuple(labels), metric.matrix(), validate=False)
