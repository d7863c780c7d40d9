class GradTrackError(Exception):
    """Base class for every error raised by gradtrack."""


class ConfigError(GradTrackError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConnectivityError(GradTrackError):
    """Erdos-Renyi sampling never produced a connected graph."""

    def __init__(self, message: str, seeds: list[int]):
        self.seeds = list(seeds)
        super().__init__(f"{message} (attempted sub-seeds {self.seeds[0]}..{self.seeds[-1]})")


class MixingValidationError(GradTrackError):
    def __init__(self, message: str, diagnostics=None):
        self.diagnostics = diagnostics
        super().__init__(message)


class ConsistencyError(GradTrackError):
    """An internal identity check failed."""


class PreconditionError(GradTrackError, ValueError):
    """An operation was called outside of its domain."""


class DivergenceError(GradTrackError):
    """A run halted on a non-finite or exploding iterate.

    Attributes:
        k: Iteration at which the halt was detected
        partial: Trajectory recorded up to the halt, if any
    """

    def __init__(self, k: int, reason: str, partial=None):
        self.k = k
        self.reason = reason
        self.partial = partial
        super().__init__(f"run halted at k={k}: {reason}")


class AllReplicasDivergedError(GradTrackError):
    def __init__(self, algorithms: list[str]):
        self.algorithms = list(algorithms)
        super().__init__(f"every replica diverged for: {', '.join(self.algorithms)}")
