from typing import Any, Optional

# Exit codes understood by the command line surface
EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class SnhError(Exception):
    """Base error carrying a machine readable code and the process exit code."""

    code = "INTERNAL_ERROR"
    exit_code = EXIT_RUNTIME_ERROR

    def __init__(self, detail: str, *, code: Optional[str] = None, extra: Optional[dict[str, Any]] = None):
        super().__init__(detail)
        self.detail = detail
        if code is not None:
            self.code = code
        self.extra = extra or {}

    def to_dict(self) -> dict[str, Any]:
        body: dict[str, Any] = {"code": self.code, "detail": self.detail}
        if self.extra:
            body.update(self.extra)
        return {"error": body}


class ConfigError(SnhError):
    code = "INVALID_CONFIG"
    exit_code = EXIT_USER_ERROR


class DatasetNotFoundError(SnhError):
    code = "DATASET_NOT_FOUND"
    exit_code = EXIT_USER_ERROR


class InvalidRowsError(SnhError):
    code = "INVALID_ROWS"
    exit_code = EXIT_USER_ERROR

    def __init__(self, detail: str, lines: list[int]):
        super().__init__(detail, extra={"lines": lines})
        self.lines = lines


class ParamSelectModelRequiredError(SnhError):
    code = "PARAMSELECT_MODEL_REQUIRED"
    exit_code = EXIT_USER_ERROR


class ArtifactVersionError(SnhError):
    code = "VERSION_MISMATCH"


class CorruptArtifactError(SnhError):
    code = "CORRUPT_ARTIFACT"


class TrainingDivergedError(SnhError):
    code = "TRAINING_DIVERGED"


class AuditViolationError(SnhError):
    code = "AUDIT_VIOLATION"
