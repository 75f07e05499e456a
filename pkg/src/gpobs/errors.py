"""Exception hierarchy shared by all gpobs modules."""


class GpobsError(Exception):
    """Base class for every error raised by gpobs."""


class DimensionError(GpobsError, ValueError):
    pass


class IntervalError(GpobsError, ValueError):
    """An interval with lo > hi somewhere."""


class SymmetryError(GpobsError, ValueError):
    pass


class SingularMatrixError(GpobsError, ArithmeticError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class InstabilityError(GpobsError, ArithmeticError):
    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class ScenarioError(GpobsError, ValueError):
    """Scenario file could not be parsed or violates an invariant."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class NoiseBoundError(GpobsError, ValueError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


class SynthesisError(GpobsError, RuntimeError):
    def __init__(self, message, best_radius=None):
        super().__init__(message)
        self.best_radius = best_radius
