"""Exception types shared across the package."""


class MeshError(ValueError):
    """Malformed, degenerate, or inconsistent mesh data."""


class SingularSystemError(RuntimeError):
    """A linear system is numerically singular.

    ``context`` names where the system came from (e.g. which element-level
    sub-problem), so solver failures can be traced back to a wave number /
    mesh combination.
    """

    def __init__(self, message: str, context: str = ""):
        self.context = context
        if context:
            message = f"{message} [{context}]"
        super().__init__(message)


class ResonanceError(ValueError):
    """A closed-form coefficient was evaluated at (or too near) a pole."""


class OutOfCalibrationError(ValueError):
    """A calibration lookup key lies above the tabulated range.

    Carries the last tabulated row so callers may explicitly opt into
    clamping instead of failing.
    """

    def __init__(self, message: str, key: float, clamped_mu: float, clamped_ns: int):
        self.key = key
        self.clamped_mu = clamped_mu
        self.clamped_ns = clamped_ns
        super().__init__(message)


class ConfigError(ValueError):
    """Bad command-line or config-file input."""
