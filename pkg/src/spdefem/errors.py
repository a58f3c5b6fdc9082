"""Exception hierarchy shared by all modules.

Every class carries a ``category`` string that the command-line front end
reports as its machine-readable error category.
"""


class SpdeFemError(Exception):
    category = "error"


class ValidationError(SpdeFemError, ValueError):
    category = "validation"


class SingularOperatorError(SpdeFemError, ArithmeticError):
    """The boundary-value operator has 0 as an eigenvalue."""

    category = "singular-operator"


class NotNegativeDefiniteError(SpdeFemError, ArithmeticError):
    """A Cholesky factorisation met a non-positive pivot."""

    category = "not-negative-definite"


class DivergenceError(SpdeFemError, FloatingPointError):
    category = "divergence"

    def __init__(self, message, step=None, config=None):
        super().__init__(message)
        self.step = step
        self.config = config


class DegenerateWeightsError(SpdeFemError):
    """Importance weights collapsed onto too few samples."""

    category = "degenerate-weights"


class AlignmentError(SpdeFemError, ValueError):
    category = "alignment"
