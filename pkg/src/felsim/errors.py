"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameter combination (bad grid, mismatched time axes, bad config file)."""


class InsufficientDataError(ValueError):
    """An estimator was given fewer samples than it needs."""


class IntegrationError(RuntimeError):
    """Density-matrix propagation became unstable or violated conservation."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ShapeError(ValueError):
    """Curve does not have the shape an analysis routine requires (e.g. bimodal input to a single-peak fit)."""


class FitError(RuntimeError):
    """Least-squares fit failed to converge."""
