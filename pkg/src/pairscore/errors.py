"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes, so library code should raise the most
specific class that applies rather than bare ValueError.
"""


class PairscoreError(Exception):
    """Base class for all package-specific errors."""


class DataError(PairscoreError):
    """Malformed, missing, or schema-incompatible input data."""


class SchemaVersionError(DataError):
    """An artifact file declares a format/version this code does not accept."""

    def __init__(self, expected: str, found: str):
        super().__init__(f"expected artifact schema {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found


class NumericError(PairscoreError):
    """A numerical precondition failed (zero variance, non-finite value, ...)."""


class TrainingDiverged(NumericError):
    """Loss became non-finite; carries the last good parameters and history."""

    def __init__(self, step: int, last_good=None, history=None):
        super().__init__(f"training loss became non-finite at step {step}")
        self.step = step
        self.last_good = last_good
        self.history = list(history) if history is not None else []


class ScorerProtocolError(PairscoreError):
    """An external scorer or translator subprocess violated the line protocol.

    ``transcript`` holds the request/response lines exchanged so far, which is
    usually enough to debug the child process.
    """

    def __init__(self, message: str, transcript=()):
        lines = "\n".join(transcript)
        super().__init__(f"{message}\n--- transcript ---\n{lines}" if lines else message)
        self.transcript = tuple(transcript)


class UsageError(PairscoreError):
    """Bad configuration or command-line usage."""
