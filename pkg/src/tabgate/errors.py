"""Exception types shared across the package."""


class TabgateError(Exception):
    """Base class for all package errors."""


class UnsupportedFormat(TabgateError):
    """Input document is not one of the supported table formats."""


class EmptyTable(TabgateError):
    """Table has no header row or no columns."""


class MissingStage(TabgateError):
    """A required prompt stage is absent from the prompts database."""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__(f"missing required stages: {', '.join(self.missing)}")


class MalformedRecord(TabgateError):
    """A prompts-database file has invalid front matter or sections."""


class UnknownTaskStage(TabgateError):
    """No prompt record exists for the requested (task, stage)."""


class UnknownTask(TabgateError):
    """Request names a task the service does not know."""


class MalformedPayload(TabgateError):
    """Request payload is missing required fields or is not valid JSON."""


class NoCodeFound(TabgateError):
    """Completion contains no extractable code."""


class FormatError(TabgateError):
    """Completion does not contain a braced answer."""


class ScriptMiss(TabgateError):
    """Mock LLM script has no rule matching the prompt."""


class TransportError(TabgateError):
    """LLM endpoint could not be reached."""


class CompletionTimeout(TransportError):
    """LLM request exceeded its timeout."""


class EndpointError(TabgateError):
    """LLM endpoint replied with a non-2xx status."""

    def __init__(self, status_code: int, body: str):
        self.status_code = status_code
        self.body = body
        super().__init__(f"endpoint returned {status_code}: {body[:200]}")


class WorkerSpawnFailure(TabgateError):
    """Sandbox worker process could not be started."""


class ProtocolError(TabgateError):
    """Sandbox worker reply was malformed."""


class MissingFiles(TabgateError):
    """Dataset files are absent from the expected layout."""


class CountMismatch(TabgateError):
    """Loaded dataset size differs from the released split size."""


class InsufficientData(TabgateError):
    """Not enough distinct values to build the requested bins."""
