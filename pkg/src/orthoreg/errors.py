"""Exception hierarchy shared by all modules."""


class OrthoregError(Exception):
    """Base class for errors raised by this package."""


class InvalidProfileError(OrthoregError, ValueError):
    """Exponent vector or profile violates its invariants."""


class DomainError(OrthoregError, ValueError):
    """Function evaluated outside its domain (poles, degenerate denominators)."""


class DegenerateEmbeddingError(DomainError):
    """Embedding exponent undefined because gamma <= p."""


class UseLinearCaseError(OrthoregError, ValueError):
    """The limit equation is linear (ell == N - 2); no quadratic polynomial."""


class ConfigurationError(OrthoregError, ValueError):
    """Invalid run configuration or iteration schedule."""


class EmptyDomainError(OrthoregError, ValueError):
    """A shifted or inner index box contains no nodes."""


class ShapeMismatchError(OrthoregError, ValueError):
    """Array shapes are incompatible with the mesh or the integrand count."""


class NumericalError(OrthoregError, ArithmeticError):
    """Numerical failure: divergence, non-finite values, quadrature not converging."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
