"""Exception hierarchy shared by all subpackages."""


class LatsenseError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LatsenseError):
    """Malformed trace, schedule, config or LP text.

    ``line`` is the 1-based line number when it is known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScheduleError(LatsenseError):
    """Semantically invalid schedule (bad labels, bad requests, ...)."""


class GraphError(LatsenseError):
    """Execution graph could not be built (unmatched messages, cycles)."""

    def __init__(self, message: str, details: list[str] | None = None):
        self.details = list(details or [])
        if self.details:
            message = message + ": " + "; ".join(self.details)
        super().__init__(message)


class ModelError(LatsenseError):
    """Bad cost-model configuration or a symbol left unbound."""


class InfeasibleError(LatsenseError):
    """Tolerance query whose runtime threshold is below the attainable runtime."""


class DeadlockError(LatsenseError):
    """The event simulator stopped with vertices that never became ready."""

    def __init__(self, stuck: list[int]):
        self.stuck = stuck
        super().__init__(f"simulation deadlocked; {len(stuck)} vertices never ran "
                         f"(first: {stuck[:10]})")
