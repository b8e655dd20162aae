"""Exception hierarchy.

Every error carries a module-qualified ``code`` so the command line can
report failures as ``<module>.<Name>``.
"""


class TICertError(Exception):
    module = "ticert"

    @property
    def code(self):
        return f"{self.module}.{type(self).__name__}"


class ChainError(TICertError):
    module = "chain_core"


class NotGenerator(ChainError):
    pass


class NotIrreducible(ChainError):
    pass


class InvariantViolation(ChainError):
    pass


class DimensionMismatch(TICertError):
    module = "chain_core"


class ParseError(TICertError):
    module = "cli"


class BudgetExceeded(TICertError):
    module = "budget"


class IndexOutOfRange(TICertError):
    module = "tensor"


class EigenFailure(TICertError):
    module = "spectral"


class OptimizerStalled(TICertError):
    module = "spectral"

    def __init__(self, message, best=None, grad_norm=None):
        super().__init__(message)
        self.best = best
        self.grad_norm = grad_norm


class NotLipschitz(TICertError):
    module = "certify"


class TransportFailure(TICertError):
    module = "transport"
