"""Exception hierarchy shared across the toolkit.

Everything user-data related derives from :class:`PlatekitError` so the CLI
can map it to a stable "data error" exit code.  Programming errors (wrong
argument types, state-machine misuse) stay plain ``ValueError``/``RuntimeError``.
"""


class PlatekitError(Exception):
    """Base class for all recoverable, data-driven failures."""


class AnnotationError(PlatekitError):
    """Malformed or invariant-violating annotation input.

    ``where`` names the offending element or line so callers can point the
    user at the exact spot in the file.
    """

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class DataError(PlatekitError):
    """Malformed prediction/transcript/timing ingest data."""


class FixtureError(PlatekitError):
    """Broken vocabulary or logit fixture file."""


class DecodeError(PlatekitError):
    """Decoder fed an invalid distribution or configuration at run time."""


class ScenarioError(PlatekitError):
    """Malformed trajectory scenario file."""


class ProtocolError(PlatekitError):
    """Violation of the plan/report stream protocol (out-of-order epoch,
    unparseable record)."""
