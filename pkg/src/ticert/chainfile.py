"""Chain-spec JSON files.

Format::

    {"states": ["a", "b"],
     "rates": [[-1, 1], [1, -1]],
     "mu": [0.5, 0.5],            # optional; solved from rates if absent
     "metric": "discrete"}        # or a full distance matrix

Errors carry the line of the offending key or rate row.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .chain import FiniteMetricSpace, ProbabilityVector, ReversibleChain, stationary_distribution
from .errors import ChainError, InvariantViolation, NotGenerator, ParseError


def _key_line(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def _row_line(text: str, key: str, row: int) -> int:
    """Line of the ``row``-th inner array of the array under ``key``."""
    m = re.search(r'"%s"\s*:\s*\[' % re.escape(key), text)
    if not m:
        return 0
    depth = 1
    seen = -1
    for pos in range(m.end(), len(text)):
        ch = text[pos]
        if ch == "[":
            depth += 1
            if depth == 2:
                seen += 1
                if seen == row:
                    return text.count("\n", 0, pos) + 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                break
    return _key_line(text, key)


def parse_chain_spec(text: str, source: str = "<string>") -> ReversibleChain:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{source}:1: top level must be an object")
    for key in ("states", "rates"):
        if key not in data:
            raise ParseError(f"{source}:1: missing required field '{key}'")
    states = data["states"]
    if not isinstance(states, list) or not states:
        raise ParseError(f"{source}:{_key_line(text, 'states')}: 'states' must be a non-empty array")
    n = len(states)
    try:
        rates = np.array(data["rates"], dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{source}:{_key_line(text, 'rates')}: 'rates' must be an array of numeric arrays") from None
    if rates.shape != (n, n):
        raise ParseError(f"{source}:{_key_line(text, 'rates')}: 'rates' has shape {rates.shape}, expected ({n}, {n})")

    rows = rates.sum(axis=1)
    scale = max(1.0, float(np.abs(rates).max()))
    for x in range(n):
        if abs(rows[x]) > 1e-12 * scale:
            raise InvariantViolation(f"{source}:{_row_line(text, 'rates', x)}: row {x} sums to {rows[x]:.6g}")
        for y in range(n):
            if x != y and rates[x, y] < 0:
                raise InvariantViolation(
                    f"{source}:{_row_line(text, 'rates', x)}: negative rate Q[{x}][{y}] = {rates[x, y]:.6g}"
                )

    metric = data.get("metric", "discrete")
    try:
        if metric == "discrete":
            space = FiniteMetricSpace.discrete(states)
        elif isinstance(metric, list):
            space = FiniteMetricSpace(tuple(states), np.array(metric, dtype=float))
        else:
            raise ParseError(f"{source}:{_key_line(text, 'metric')}: 'metric' must be \"discrete\" or a matrix")
    except ChainError as exc:
        raise InvariantViolation(f"{source}:{_key_line(text, 'metric')}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{source}:{_key_line(text, 'metric')}: {exc}") from None

    try:
        if "mu" in data:
            mu = ProbabilityVector(np.array(data["mu"], dtype=float))
        else:
            mu = stationary_distribution(rates)
        return ReversibleChain(space, rates, mu)
    except ChainError as exc:
        key = "mu" if "mu" in data and "mu" in str(exc) else "rates"
        raise type(exc)(f"{source}:{_key_line(text, key)}: {exc}") from None


def load_chain_spec(path) -> ReversibleChain:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{p}: cannot read: {exc.strerror}") from None
    return parse_chain_spec(text, str(p))


def dump_chain_spec(chain: ReversibleChain) -> str:
    return json.dumps(
        {
            "states": list(chain.space.labels),
            "rates": chain.rates.tolist(),
            "mu": chain.pi.tolist(),
            "metric": chain.space.dist.tolist(),
        },
        sort_keys=True,
        indent=2,
    )
