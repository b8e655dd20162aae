"""Transportation-information inequalities on finite reversible Markov chains."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .chain import (
    FiniteMetricSpace,
    ObservableFunction,
    ProbabilityVector,
    ReversibleChain,
    dirichlet_form,
    fisher_information,
    relative_entropy,
    stationary_distribution,
)
from .chainfile import load_chain_spec, parse_chain_spec
from .errors import TICertError
from .spectral import fk_lograte, fk_lograte_dual, fk_lograte_product, fk_opnorm_expm
from .transport import kantorovich_dual, product_space, wasserstein

__all__ = [
    "BACKEND",
    "FiniteMetricSpace",
    "ObservableFunction",
    "ProbabilityVector",
    "ReversibleChain",
    "TICertError",
    "dirichlet_form",
    "fisher_information",
    "fk_lograte",
    "fk_lograte_dual",
    "fk_lograte_product",
    "fk_opnorm_expm",
    "kantorovich_dual",
    "load_chain_spec",
    "parse_chain_spec",
    "product_space",
    "relative_entropy",
    "stationary_distribution",
    "wasserstein",
]
