"""Exception hierarchy shared across the engine.

Two top-level families matter for exit codes: validation errors (bad input,
bad config, malformed corpus) and infrastructure errors (missing interpreter,
transport failure). Everything else is a plain ValueError/TypeError.
"""


class EngineError(Exception):
    """Base class for engine-specific failures."""


class ValidationError(EngineError):
    """Input violates a documented contract (exit code 1 at the CLI)."""


class CorpusError(ValidationError):
    """A problem corpus file is malformed."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class SequenceFormatError(ValidationError):
    """A feedback-conditioned sequence violates the wire format.

    ``rule`` names the violated constraint, e.g. ``missing_reward_token``.
    """

    def __init__(self, rule, message):
        super().__init__(f"{rule}: {message}")
        self.rule = rule


class InfrastructureError(EngineError):
    """The environment is broken, not the evaluated solution (exit code 2)."""


class SpawnError(InfrastructureError):
    """The target interpreter could not be started."""


class GenerationTransportError(InfrastructureError):
    """A remote generation endpoint could not be reached.

    Carries ``attempts`` so callers can report retry behaviour.
    """

    def __init__(self, message, attempts, last_status=None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status
