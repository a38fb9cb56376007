"""Exception hierarchy for convlab."""


class ConvlabError(Exception):
    """Base class for all convlab errors."""


class OutOfDomain(ConvlabError):
    """A chart point violates the chart's domain bounds."""

    def __init__(self, x, label=""):
        self.x = x
        super().__init__(f"point {x} outside domain of chart {label!r}")


class NotPositiveDefinite(ConvlabError):
    """The user-supplied metric is not positive definite at a point."""

    def __init__(self, x, min_eig):
        self.x = x
        self.min_eig = min_eig
        super().__init__(f"metric at {x} has min eigenvalue {min_eig:g} <= 0")


class StencilOutsideDomain(ConvlabError):
    """A finite-difference stencil would leave the chart domain."""


class NonFiniteState(ConvlabError):
    """Numerical blow-up: the integrator produced NaN or Inf."""


class LeftDomain(ConvlabError):
    """A trajectory exited the chart domain at parameter ``t_exit``.

    The partial path computed up to the exit is attached as ``partial_path``.
    """

    def __init__(self, t_exit, partial_path=None):
        self.t_exit = t_exit
        self.partial_path = partial_path
        super().__init__(f"trajectory left the chart domain at t = {t_exit:g}")


class NoConvergence(ConvlabError):
    """No shooting start converged to the target point."""


class OracleMismatch(ConvlabError):
    """Graph oracle and shooting distance disagree beyond tolerance."""

    def __init__(self, shoot_d, oracle_d):
        self.shoot_d = shoot_d
        self.oracle_d = oracle_d
        super().__init__(
            f"shooting distance {shoot_d:g} vs graph oracle {oracle_d:g}"
        )


class OutOfRange(ConvlabError):
    """Evaluation parameter outside the valid range."""


class RadiusBeyondInjectivity(ConvlabError):
    """A sphere check was requested beyond the injectivity estimate."""


class UnknownModel(ConvlabError):
    """Model name not present in the registry."""


class BadParams(ConvlabError):
    """Invalid parameters for a built-in model."""


class BudgetExceeded(ConvlabError):
    """An estimation budget was exhausted before completion."""


class ConfigError(ConvlabError):
    """Invalid or unreadable analysis configuration."""
