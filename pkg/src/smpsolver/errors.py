"""Exception hierarchy shared by every solver module."""


class SmpError(Exception):
    """Base class for all errors raised by smpsolver."""


class ModelValidationError(SmpError):
    """Raised when a model description violates the semi-Markov assumptions.

    ``violations`` lists every problem found, not just the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnsupportedOperationError(SmpError):
    pass


class NumericalError(SmpError):
    """A numeric step failed or produced non-finite values.

    ``t`` and ``node`` identify the time point and Laplace-domain node
    being processed, when known.
    """

    def __init__(self, message, *, t=None, node=None, error_estimate=None):
        self.t = t
        self.node = node
        self.error_estimate = error_estimate
        parts = [message]
        if t is not None:
            parts.append(f"t={t!r}")
        if node is not None:
            parts.append(f"node={node!r}")
        if error_estimate is not None:
            parts.append(f"error estimate={error_estimate:.3g}")
        super().__init__(", ".join(parts))


class QuadratureError(NumericalError):
    pass


class SingularMatrixError(NumericalError):
    pass


class UndefinedQuantityError(SmpError):
    """The requested quantity does not exist for this model (e.g. hazard to an unreachable state)."""
