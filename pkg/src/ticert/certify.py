"""Best constants and dual checks for transport-information inequalities.

For an inequality ``W_p^2(mu^n, nu) <= C * alpha(nu)`` with alpha the Fisher
information (``WpI``) or the relative entropy (``WpH``) on the n-fold product,
the best constant is the supremum of the ratio over nu != mu^n. It is probed
from below by a grid (tiny spaces), multi-start ratio ascent, and a scan of
directions approaching mu^n, where the supremum is often only reached in
the limit.

W1-type constants are then checked against their dual formulations:

    W1I(C):  lograte(lam f) <= lam <f, mu> + C lam^2 / 4
    W1H(C):  log <e^{lam f}, mu> <= lam <f, mu> + C lam^2 / 4

for 1-Lipschitz f.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .chain import ReversibleChain, entropy_array, fisher_array, fisher_gradient, lipschitz_constant
from .config import check_budget
from .errors import BudgetExceeded, NotLipschitz
from .optim import mirror_ascent
from .spectral import fk_lograte, fk_lograte_batch, fk_lograte_product, product_stationary
from .tensor import ProductChain
from .transport import ProductMetric, solve_transport

NAMES = ("W1I", "W2I", "W1H", "W2H")
PROBE_LIMIT = 256
DENSE_DUAL_LIMIT = 512
SLACK_TOL = 1e-8
LIPSCHITZ_TOL = 1e-12
NEAR_SCALES = tuple(10.0**-k for k in range(1, 7))
NEAR_DIRECTIONS = 64
# successive decades must each grow by at least this factor to flag divergence
DIVERGENCE_FACTOR = math.sqrt(10.0)
DIVERGENCE_DECADES = 3
# candidates closer than this (l1) to mu are 0/0 noise, never witnesses
MIN_SEPARATION = 5e-7


def _parse_name(name: str):
    key = name.upper()
    if key not in NAMES:
        raise ValueError(f"unknown inequality {name!r}; choose from {NAMES}")
    return key, int(key[1]), key[2]


# ---------------------------------------------------------------------------
# the ratio W_p^2 / alpha on a (product) space


class RatioProblem:
    """W_p^2(mu^n, nu) / alpha(nu) on E^n with the l2 or l1 product metric."""

    def __init__(self, chain: ReversibleChain, name: str, n: int = 1, mode: str = "l2",
                 budget: Optional[int] = None):
        self.name, self.p, self.kind = _parse_name(name)
        self.chain = chain
        self.n = n
        self.mode = mode
        self.size = chain.size**n
        check_budget(self.size, budget)
        if self.size > PROBE_LIMIT:
            raise BudgetExceeded(f"ratio probing limited to {PROBE_LIMIT} product states, got {self.size}")
        self.dist = chain.space.dist if n == 1 else ProductMetric(chain.space, n, mode).matrix()
        self.cost = np.ascontiguousarray(self.dist**self.p)
        self.pi = product_stationary(chain.pi, n)
        self.rates = chain.rates if n == 1 else ProductChain(chain, n).generator()

    def alpha(self, nu: np.ndarray) -> float:
        if self.kind == "I":
            return fisher_array(self.rates, self.pi, nu)
        return entropy_array(nu, self.pi)

    def alpha_grad(self, nu: np.ndarray) -> np.ndarray:
        if self.kind == "I":
            return fisher_gradient(self.rates, self.pi, nu)
        return np.log(np.maximum(nu, 1e-300) / self.pi) + 1.0

    def transport(self, nu: np.ndarray):
        """(W_p^p, row potential) with zero atoms of nu dropped."""
        pos = nu > 0
        _plan, value, u, _v, _gap, _solver = solve_transport(nu[pos], self.pi, self.cost[pos])
        full = np.zeros_like(nu)
        full[pos] = u
        if not pos.all():
            # c-transform gives a valid potential on the dropped atoms
            vcol = np.min(self.cost[pos] - u[:, None], axis=0)
            full[~pos] = np.min(self.cost[~pos] - vcol[None, :], axis=1)
        return max(value, 0.0), full

    def ratio(self, nu) -> float:
        nu = np.asarray(nu, dtype=float)
        a = self.alpha(nu)
        if a <= 0:
            return math.nan
        wpp, _ = self.transport(nu)
        w2 = wpp**2 if self.p == 1 else wpp
        return w2 / a

    def log_ratio_and_grad(self, nu: np.ndarray):
        a = self.alpha(nu)
        wpp, u = self.transport(nu)
        if a <= 0 or wpp <= 0:
            return -math.inf, np.zeros_like(nu)
        w2 = wpp**2 if self.p == 1 else wpp
        g = (2.0 if self.p == 1 else 1.0) * u / wpp - self.alpha_grad(nu) / a
        return math.log(w2 / a), g


# ---------------------------------------------------------------------------
# probing


@dataclass
class NearProbe:
    direction: int
    scales: tuple
    ratios: tuple
    extrapolated: float


def _richardson(r_coarse: float, r_fine: float, factor: float = 10.0) -> float:
    """Limit of r(delta) = r0 + a*delta from two scales one decade apart."""
    return r_fine + (r_fine - r_coarse) / (factor - 1.0)


def unit_direction(w, pi) -> tuple:
    """(h, reach): h = (w - pi) / |w - pi|_1 and the largest step keeping pi + t h >= 0."""
    h = np.asarray(w, dtype=float) - pi
    norm = np.abs(h).sum()
    if norm == 0:
        return None, 0.0
    h = h / norm
    neg = h < 0
    reach = float(np.min(pi[neg] / -h[neg])) if neg.any() else math.inf
    return h, reach


def spread(nu, pi, size: float = 0.2) -> np.ndarray:
    """Move from mu toward ``nu`` by l1 distance ``size`` (or 90% of the reach)."""
    h, reach = unit_direction(nu, pi)
    if h is None:
        return np.asarray(pi, dtype=float).copy()
    return pi + min(size, 0.9 * reach) * h


def near_mu_scan(prob: RatioProblem, directions: int = NEAR_DIRECTIONS, scales=NEAR_SCALES, seed: int = 0,
                 extra_directions: Sequence[np.ndarray] = ()):
    """Ratios along nu = mu + delta * h for unit-l1 directions h with sum 0.

    Random directions come from Dirichlet points; ``extra_directions`` are
    measures whose direction from mu is scanned as well. Scales are capped
    by the reach of each direction so every probe is a measure.
    """
    rng = np.random.default_rng(seed)
    ws = [np.asarray(w, dtype=float) for w in extra_directions]
    while len(ws) < directions:
        ws.append(rng.dirichlet(np.full(prob.size, rng.choice([0.2, 1.0]))))
    probes = []
    best = (-math.inf, None)
    for i, w in enumerate(ws):
        h, reach = unit_direction(w, prob.pi)
        if h is None:
            continue
        cap = min(1.0, 0.9 * reach / scales[0])
        ds = tuple(d * cap for d in scales)
        rs = []
        for d in ds:
            nu = prob.pi + d * h
            r = prob.ratio(nu)
            rs.append(r)
            if r > best[0] and np.abs(nu - prob.pi).sum() >= MIN_SEPARATION:
                best = (r, nu)
        k = len(ds) // 2
        ext = _richardson(rs[k - 1], rs[k]) if len(ds) >= 2 else rs[-1]
        probes.append(NearProbe(i, ds, tuple(rs), ext))
    return probes, best


def diverges(ratios: Sequence[float], decades: int = DIVERGENCE_DECADES, factor: float = DIVERGENCE_FACTOR) -> bool:
    """True when the last ``decades`` steps toward mu each grew by ``factor``."""
    r = np.asarray(ratios, dtype=float)
    if r.size < decades + 1 or not np.all(np.isfinite(r[-decades - 1:])):
        return False
    tail = r[-decades - 1:]
    return bool(np.all(tail[1:] >= factor * tail[:-1]))


def _grid_points(size: int, steps: int):
    if size == 1:
        return np.ones((1, 1))
    if size == 2:
        t = (np.arange(steps) + 0.5) / steps
        return np.stack([t, 1.0 - t], axis=1)
    i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
    keep = i + j <= steps
    a = i[keep] / steps
    b = j[keep] / steps
    return np.stack([a, b, 1.0 - a - b], axis=1)


def ratio_ascent(prob: RatioProblem, x0: np.ndarray, max_iter: int = 200, min_dist: float = 1e-6):
    """Local ascent of the log-ratio; stops before collapsing onto mu."""
    pi = prob.pi

    def value(x):
        if np.abs(x - pi).sum() < min_dist:
            return -math.inf
        return prob.log_ratio_and_grad(x)[0]

    def grad(x):
        return prob.log_ratio_and_grad(x)[1]

    x0 = np.asarray(x0, dtype=float)
    if np.abs(x0 - pi).sum() < 10 * min_dist:
        x0 = spread(x0, pi, 10 * min_dist)
    res = mirror_ascent(value, grad, x0, tol=1e-10, max_iter=max_iter, step=0.5)
    return res.x, prob.ratio(res.x)


# ---------------------------------------------------------------------------
# Lipschitz probes and dual checks


def mcshane(values, dist) -> np.ndarray:
    """Largest 1-Lipschitz function below ``values``."""
    v = np.asarray(values, dtype=float)
    return np.min(v[None, :] + np.asarray(dist), axis=1)


def lipschitz_probes(dist, count: int, seed: int = 0) -> np.ndarray:
    """Random 1-Lipschitz functions, one per row."""
    rng = np.random.default_rng(seed)
    d = np.asarray(dist, dtype=float)
    scale = float(d.max()) if d.size > 1 else 1.0
    out = np.empty((count, d.shape[0]))
    for i in range(count):
        raw = rng.normal(0.0, scale, d.shape[0]) * rng.choice([0.5, 1.0, 3.0])
        out[i] = mcshane(raw, d)
    return out


def _metric_for(obj, mode: str) -> np.ndarray:
    if isinstance(obj, ProductChain):
        return obj.base.space.dist if obj.n == 1 else ProductMetric(obj.base.space, obj.n, mode).matrix()
    return obj.space.dist


def _require_lipschitz(f: np.ndarray, dist: np.ndarray) -> None:
    lip = lipschitz_constant(f, dist)
    if lip > 1.0 + LIPSCHITZ_TOL:
        raise NotLipschitz(f"observable has Lipschitz constant {lip:.6g} > 1")


def check_w1_dual(chain_or_product, C: float, f, lam: float, mode: str = "l2") -> float:
    """lam <f, mu> + C lam^2 / 4 - lograte(lam f); nonnegative under W1I(C)."""
    fv = np.asarray(f, dtype=float)
    _require_lipschitz(fv, _metric_for(chain_or_product, mode))
    if isinstance(chain_or_product, ProductChain):
        pc = chain_or_product
        pi = pc.pi
        lograte = fk_lograte_product(pc.base, pc.n, lam * fv)
    else:
        pi = chain_or_product.pi
        lograte = fk_lograte(chain_or_product, lam * fv)
    return lam * float(pi @ fv) + C * lam**2 / 4.0 - lograte


def _log_mgf(mu: np.ndarray, g: np.ndarray) -> float:
    m = float(g.max())
    return m + math.log(float(mu @ np.exp(g - m)))


def check_w1h_dual(mu, C: float, f, lam: float, dist=None) -> float:
    """lam <f, mu> + C lam^2 / 4 - log <e^{lam f}, mu>; nonnegative under W1H(C)."""
    m = np.asarray(mu, dtype=float)
    fv = np.asarray(f, dtype=float)
    if dist is not None:
        _require_lipschitz(fv, dist)
    return lam * float(m @ fv) + C * lam**2 / 4.0 - _log_mgf(m, lam * fv)


@dataclass
class DualRecord:
    probe: int
    f: np.ndarray
    lam: float
    lhs: float
    rhs: float
    slack: float


def dual_ledger(chain: ReversibleChain, kind: str, n: int, C: float, probes: int = 200, seed: int = 0,
                mode: str = "l2", lam_range=(-10.0, 10.0)) -> List[DualRecord]:
    """Random (f, lam) probes of the W1-type dual inequality at constant C."""
    dist = chain.space.dist if n == 1 else ProductMetric(chain.space, n, mode).matrix()
    fs = lipschitz_probes(dist, probes, seed)
    lams = np.random.default_rng(seed + 1).uniform(lam_range[0], lam_range[1], probes)
    pi = product_stationary(chain.pi, n)
    pots = lams[:, None] * fs
    if kind == "H":
        lhs = np.array([_log_mgf(pi, p) for p in pots])
    elif n == 1:
        lhs = fk_lograte_batch(chain, pots)
    elif pi.size <= DENSE_DUAL_LIMIT:
        pc = ProductChain(chain, n)
        sym = ReversibleChain.from_rates(pc.generator(), mu=pi).symmetrized()
        mats = np.broadcast_to(sym, (probes,) + sym.shape).copy()
        idx = np.arange(pi.size)
        mats[:, idx, idx] += pots
        lhs = np.linalg.eigvalsh(mats)[:, -1]
    else:
        lhs = np.array([fk_lograte_product(chain, n, p) for p in pots])
    rhs = lams * (fs @ pi) + C * lams**2 / 4.0
    return [DualRecord(i, fs[i], float(lams[i]), float(lhs[i]), float(rhs[i]), float(rhs[i] - lhs[i]))
            for i in range(probes)]


# ---------------------------------------------------------------------------
# certificates


@dataclass
class InequalityCertificate:
    name: str
    n: int
    constant_lower: float
    witness: np.ndarray
    constant_estimate: float
    diverged: bool
    mode: str = "l2"
    dual_ledger: List[DualRecord] = field(default_factory=list)
    near_probes: List[NearProbe] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.constant_lower > self.constant_estimate:
            raise ValueError("constant_lower exceeds constant_estimate")

    @property
    def min_slack(self) -> Optional[float]:
        return min(r.slack for r in self.dual_ledger) if self.dual_ledger else None

    @property
    def argmin(self) -> Optional[int]:
        if not self.dual_ledger:
            return None
        return min(self.dual_ledger, key=lambda r: (r.slack, r.probe)).probe

    def to_dict(self) -> dict:
        est = self.constant_estimate
        return {
            "name": self.name,
            "n": self.n,
            "mode": self.mode,
            "constant_lower": self.constant_lower,
            "constant_estimate": est if math.isfinite(est) else None,
            "witness": [float(x) for x in self.witness],
            "diverged": self.diverged,
            "ledger_summary": {"min_slack": self.min_slack, "argmin": self.argmin},
            "near_mu_probes": [
                {"direction": p.direction, "scales": list(p.scales), "ratios": list(p.ratios)}
                for p in self.near_probes[:8]
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def best_constant(chain: ReversibleChain, name: str, n: int = 1, budget: Optional[int] = None,
                  mode: str = "l2", seed: int = 0, starts: int = 8, grid_steps: int = 10_000,
                  seeds: Sequence[np.ndarray] = (), probes: int = 200, ascent_iter: int = 200):
    """Probe the best constant of ``name`` on the n-fold product.

    ``seeds`` are extra starting measures on E^n, e.g. a witness of the
    previous dimension tensored with mu.
    """
    prob = RatioProblem(chain, name, n, mode, budget)
    pi = prob.pi
    candidates = []

    if prob.size <= 3:
        steps = grid_steps if prob.size == 2 else 150
        for nu in _grid_points(prob.size, steps):
            if np.abs(nu - pi).max() > 1e-12:
                candidates.append((prob.ratio(nu), nu))

    near, near_best = near_mu_scan(prob, seed=seed, extra_directions=list(seeds))
    if near_best[1] is not None:
        candidates.append(near_best)

    rng = np.random.default_rng(seed + 7)
    x0s = [np.asarray(s, dtype=float) for s in seeds]
    x0s += [rng.dirichlet(np.full(prob.size, a)) for a in np.resize([0.3, 1.0, 3.0], starts)]
    # probe the far end too: point masses mixed slightly toward mu
    for x in np.argsort(pi)[:2]:
        e = np.zeros(prob.size)
        e[x] = 1.0
        x0s.append(0.98 * e + 0.02 * pi)
    for x0 in x0s:
        r0 = prob.ratio(x0)
        if np.isfinite(r0):
            candidates.append((r0, x0))
        x, r = ratio_ascent(prob, x0, max_iter=ascent_iter)
        if np.isfinite(r):
            candidates.append((r, x))

    usable = [(r, nu) for r, nu in candidates
              if np.isfinite(r) and np.abs(nu - pi).sum() >= MIN_SEPARATION]
    lower, witness = max(usable, key=lambda t: t[0])
    div = sum(diverges(p.ratios) for p in near) > len(near) // 2
    if div:
        estimate = math.inf
    else:
        ext = max((p.extrapolated for p in near if np.isfinite(p.extrapolated)), default=lower)
        estimate = max(lower, ext)
    cert = InequalityCertificate(prob.name, n, float(lower), np.asarray(witness), float(estimate), bool(div),
                                 mode, near_probes=near)
    if not div and prob.p == 1 and probes > 0:
        cert.dual_ledger = dual_ledger(chain, prob.kind, n, estimate + 1e-9, probes=probes, seed=seed, mode=mode)
    return cert


def dimension_sweep(chain: ReversibleChain, name: str, n_max: int, mode: str = "l2", budget: Optional[int] = None,
                    seed: int = 0, probes: int = 50, **kwargs) -> List[InequalityCertificate]:
    """Best W1-type constants for n = 1..n_max, each seeded from the last."""
    key, p, _kind = _parse_name(name)
    if p != 1:
        raise ValueError("dimension sweeps are defined for W1I and W1H")
    check_budget(chain.size**n_max, budget)
    certs = []
    base_witness = None
    for n in range(1, n_max + 1):
        seeds = []
        if certs:
            prev = certs[-1].witness
            seeds.append(np.kron(prev, chain.pi))
            seeds.append(np.kron(chain.pi, prev))
            # product witnesses, pushed away from mu so their direction survives
            for size in (0.02, 0.2):
                seeds.append(product_stationary(spread(base_witness, chain.pi, size), n))
        cert = best_constant(chain, key, n, budget=budget, mode=mode, seed=seed, seeds=seeds, probes=probes, **kwargs)
        if certs and cert.constant_estimate < certs[-1].constant_estimate - 1e-8:
            raise AssertionError(f"sweep constant dropped at n={n}")
        if base_witness is None:
            base_witness = cert.witness
        certs.append(cert)
    return certs


def sweep_constants(certs: Sequence[InequalityCertificate]) -> np.ndarray:
    return np.array([c.constant_estimate for c in certs])


def w1i_limit_ratio(chain: ReversibleChain, h) -> float:
    """Exact limit of W1^2/I along mu + delta*h as delta -> 0.

    W1 is homogeneous in nu - mu, and I(mu + delta h) ~ delta^2 E(h/mu)/4.
    """
    from .chain import dirichlet_array
    from .transport import kantorovich_dual_dist

    hv = np.asarray(h, dtype=float)
    pi = chain.pi
    # only nu - mu enters the dual LP, so pi + h need not be a measure
    kr, _ = kantorovich_dual_dist(chain.space.dist, pi + hv, pi)
    energy = dirichlet_array(chain.rates, pi, hv / pi)
    return kr**2 / (energy / 4.0) if energy > 0 else math.nan
