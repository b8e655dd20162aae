"""Bundled chains and a random reversible-chain generator."""
from importlib import resources

import numpy as np

from ..chain import FiniteMetricSpace, ReversibleChain
from ..chainfile import parse_chain_spec

FIXTURES = ("two_state", "birth_death3", "cycle4")


def fixture_path(name: str):
    return resources.files(__name__).joinpath(f"{name}.json")


def load_fixture(name: str) -> ReversibleChain:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    p = fixture_path(name)
    return parse_chain_spec(p.read_text(), f"{name}.json")


def random_reversible_chain(rng: np.random.Generator, size: int, rate_range=(0.1, 3.0),
                            density: float = 0.7) -> ReversibleChain:
    """Reversible chain with off-diagonal rates in ``rate_range``.

    Rates are Q[x,y] = K[x,y] sqrt(mu[y]/mu[x]) for a symmetric K on a
    connected random graph; draws are rejected until all positive rates
    fall inside the range.
    """
    lo, hi = rate_range
    while True:
        mu = rng.dirichlet(np.full(size, 4.0))
        ratio = np.sqrt(mu[None, :] / mu[:, None])
        mask = np.triu(rng.random((size, size)) < density, 1)
        perm = rng.permutation(size)
        for a, b in zip(perm[:-1], perm[1:]):
            mask[min(a, b), max(a, b)] = True
        mask = mask | mask.T
        k = rng.uniform(lo, hi, (size, size))
        k = np.triu(k, 1)
        k = k + k.T
        q = np.where(mask, k * ratio, 0.0)
        off = q[mask]
        if off.size and (off.min() < lo or off.max() > hi):
            continue
        np.fill_diagonal(q, -q.sum(axis=1))
        space = FiniteMetricSpace.discrete([str(i) for i in range(size)])
        return ReversibleChain(space, q, mu)
