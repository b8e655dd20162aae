"""Maximization of concave objectives over the probability simplex.

Exponentiated-gradient (mirror) ascent with backtracking. When a Hessian is
supplied, a damped Newton step restricted to {sum d = 0} is tried first on
each iteration, which turns the linear tail of mirror ascent into quadratic
convergence for the Fisher-information objectives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

FLOOR = 1e-14


@dataclass
class AscentResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool


def stationarity(x: np.ndarray, g: np.ndarray) -> float:
    """Norm of the gradient projected on the simplex tangent, weighted by x.

    Vanishes exactly at KKT points, including boundary ones.
    """
    gbar = float(x @ g)
    return float(np.sqrt(x @ (g - gbar) ** 2))


def _newton_direction(x, g, h):
    n = x.shape[0]
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = h
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.concatenate([-g, [0.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    d = sol[:n]
    if not np.all(np.isfinite(d)):
        return None
    # ascent direction only
    if g @ d <= 0:
        return None
    return d


def mirror_ascent(
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = 1e-8,
    max_iter: int = 20000,
    step: float = 1.0,
    floor: float = FLOOR,
) -> AscentResult:
    x = np.maximum(np.asarray(x0, dtype=float), floor)
    x /= x.sum()
    fx = value(x)
    g = grad(x)
    eta = step
    gn = stationarity(x, g)
    it = 0
    while it < max_iter:
        gn = stationarity(x, g)
        if gn <= tol:
            return AscentResult(x, fx, gn, it, True)
        it += 1
        moved = False
        if hess is not None:
            d = _newton_direction(x, g, hess(x))
            if d is not None:
                neg = d < 0
                tmax = 1.0
                if neg.any():
                    tmax = min(1.0, 0.95 * float(np.min((x[neg] - floor) / -d[neg])))
                t = tmax
                for _ in range(30):
                    y = np.maximum(x + t * d, floor)
                    y /= y.sum()
                    fy = value(y)
                    if fy > fx or (fy >= fx - 1e-15 * max(1.0, abs(fx)) and stationarity(y, grad(y)) < gn):
                        x, fx = y, fy
                        g = grad(x)
                        moved = True
                        break
                    t *= 0.5
        if moved:
            continue
        for _ in range(60):
            z = eta * (g - g.max())
            y = x * np.exp(z)
            y = np.maximum(y / y.sum(), floor)
            y /= y.sum()
            fy = value(y)
            if fy >= fx + 1e-4 * float(g @ (y - x)) and fy >= fx:
                x, fx = y, fy
                g = grad(x)
                eta = min(eta * 1.5, 1e6)
                moved = True
                break
            eta *= 0.5
        if not moved:
            break
    return AscentResult(x, fx, stationarity(x, g), it, stationarity(x, g) <= tol)


def restart_points(mu: np.ndarray, restarts: int, seed: int):
    """Deterministic starting points: mu first, then Dirichlet draws mixed
    toward mu, one stream per restart (``seed + index``)."""
    pts = [np.asarray(mu, dtype=float)]
    for r in range(1, restarts):
        rng = np.random.default_rng(seed + r)
        d = rng.dirichlet(np.full(mu.shape[0], rng.choice([0.3, 1.0, 3.0])))
        t = rng.uniform(0.05, 0.95)
        pts.append((1 - t) * mu + t * d)
    return pts


def pattern_search(value: Callable[[np.ndarray], float], x0: np.ndarray, step: float = 0.25,
                   tol: float = 1e-10, max_evals: int = 20000, floor: float = FLOOR):
    """Gradient-free maximization in softmax coordinates (compass search)."""
    x = np.maximum(np.asarray(x0, dtype=float), floor)
    x /= x.sum()
    theta = np.log(x)
    fx = value(x)
    n = x.shape[0]
    evals = 1
    h = step
    while h > tol and evals < max_evals:
        improved = False
        for i in range(n):
            for sgn in (1.0, -1.0):
                th = theta.copy()
                th[i] += sgn * h
                y = np.exp(th - th.max())
                y /= y.sum()
                fy = value(y)
                evals += 1
                if fy > fx:
                    theta, x, fx = th, y, fy
                    improved = True
                    break
        if not improved:
            h *= 0.5
    return AscentResult(x, fx, h, evals, h <= tol)
