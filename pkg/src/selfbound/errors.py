"""Exception types raised across the package."""


class InputError(ValueError):
    """Non-finite or otherwise malformed numeric input."""


class ConfigError(ValueError):
    """Invalid or inconsistent loss/experiment parameters."""


class RangeError(ValueError):
    """A parameter lies outside the range where a result is defined."""


class ShapeError(ValueError):
    """Array dimensions do not match."""


class SizeError(ValueError):
    """A sample is too small for the requested construction."""


class InfeasibleMarginError(ValueError):
    """The requested margin cannot be realised under the norm constraint."""


class HypothesisViolation(ValueError):
    """A theorem hypothesis (e.g. eps <= rho(eps)^2 / (eta T)) fails."""


class DivergenceError(RuntimeError):
    """The empirical risk blew past the divergence guard."""

    def __init__(self, step, risk, initial_risk):
        super().__init__(
            f"divergence guard triggered at step {step}: "
            f"risk {risk:.6g} > 1e6 * initial risk {initial_risk:.6g}"
        )
        self.step = step
        self.risk = risk
        self.initial_risk = initial_risk
