"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An input was malformed or non-finite."""


class IntegrationDivergedError(ArithmeticError):
    """A Runge-Kutta stage produced a non-finite or inadmissible value."""

    def __init__(self, t, message="integration diverged"):
        self.t = float(t)
        super().__init__(f"{message} at t={self.t:g}")


class CostDomainError(ValueError):
    """A control value fell outside the natural domain of a running cost."""

    def __init__(self, u, t=None, kind=None):
        self.u = float(u)
        self.t = None if t is None else float(t)
        self.kind = kind
        where = "" if t is None else f" at t={self.t:g}"
        name = "" if kind is None else f" for {kind}"
        super().__init__(f"control u={self.u!r} outside cost domain{name}{where}")


class NumericalError(ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


class TrainingFailedError(RuntimeError):
    """Training could not take an admissible step."""

    def __init__(self, message, iteration=None, diagnostics=None):
        self.iteration = iteration
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)
