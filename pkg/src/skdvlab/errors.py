"""Exception types shared across the package."""


class GridMismatch(ValueError):
    """Two fields combined arithmetically do not share a grid."""


class ConfigError(ValueError):
    """Invalid or missing experiment configuration."""


class TrajectoryFailure(RuntimeError):
    """NaN/overflow during time stepping; carries the last valid time."""

    def __init__(self, message: str, t_last: float):
        super().__init__(message)
        self.t_last = t_last


class DecompositionFailure(RuntimeError):
    """Newton iteration for the soliton decomposition did not converge."""
