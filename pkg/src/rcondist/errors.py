"""Exception types raised across the package."""


class RconError(ValueError):
    """Base class for invalid model inputs."""


class InvalidGraph(RconError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid coloured graph: " + "; ".join(str(v) for v in self.violations))


class NotPositiveDefinite(RconError):
    pass


class DimensionMismatch(RconError):
    pass


class InsufficientReplicates(RconError):
    pass


class EstimationError(RuntimeError):
    """Raised when one or more per-vertex estimations fail.

    ``failures`` maps vertex id to the error message.
    """

    def __init__(self, failures):
        self.failures = dict(failures)
        detail = ", ".join(f"vertex {v}: {msg}" for v, msg in sorted(self.failures.items()))
        super().__init__(f"estimation failed ({detail})")
