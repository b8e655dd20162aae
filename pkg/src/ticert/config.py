import os

from .errors import BudgetExceeded

DEFAULT_STATE_BUDGET = 60_000


def state_budget(override=None) -> int:
    """Product-state budget; ``TI_CERT_BUDGET`` overrides the default."""
    if override is not None:
        return int(override)
    env = os.environ.get("TI_CERT_BUDGET")
    return int(env) if env else DEFAULT_STATE_BUDGET


def check_budget(n_states: int, budget=None, what: str = "product space") -> None:
    limit = state_budget(budget)
    if n_states > limit:
        raise BudgetExceeded(f"{what} has {n_states} states, budget is {limit}")
