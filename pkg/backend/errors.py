"""
Exception types for the experiment database.

Every error carries a machine-readable ``code``, a human message and a list of
``details``; the HTTP layer renders them as ``{"error": {...}}`` using the
class-level ``status_code``.
"""

from __future__ import annotations

from typing import Any, List, Optional


class ExpDBError(Exception):
    """Base class for all structured errors."""

    status_code: int = 400
    code: str = "error"

    def __init__(self, message: str, details: Optional[List[Any]] = None):
        super().__init__(message)
        self.message = message
        self.details: List[Any] = list(details or [])

    def to_dict(self) -> dict:
        return {"error": {"code": self.code, "message": self.message, "details": self.details}}


# Formats


class FormatError(ExpDBError):
    code = "format_error"


class ArffError(FormatError):
    """An ARFF parse error anchored at a 1-based line number."""

    def __init__(self, line: int, message: str, details: Optional[List[Any]] = None):
        super().__init__(f"line {line}: {message}", details)
        self.line = line


class UnknownNominalValue(ArffError):
    code = "unknown_nominal_value"

    def __init__(self, line: int, column: str, token: str):
        super().__init__(line, f"value {token!r} is not declared for attribute {column!r}")
        self.column = column
        self.token = token


class MissingSection(ArffError):
    code = "missing_section"

    def __init__(self, section: str, line: int):
        super().__init__(line, f"missing {section} section")
        self.section = section


class ArityMismatch(ArffError):
    code = "arity_mismatch"

    def __init__(self, line: int, expected: int, got: int):
        super().__init__(line, f"expected {expected} values, got {got}")
        self.expected = expected
        self.got = got


class MalformedHeader(ArffError):
    code = "malformed_header"

    def __init__(self, line: int, reason: str = "malformed header line"):
        super().__init__(line, reason)


class MalformedRow(ArffError):
    code = "malformed_row"

    def __init__(self, line: int, reason: str = "malformed data line"):
        super().__init__(line, reason)


class InvalidNumericValue(ArffError):
    code = "invalid_numeric_value"

    def __init__(self, line: int, column: str, token: str):
        super().__init__(line, f"value {token!r} is not a finite number for attribute {column!r}")
        self.column = column
        self.token = token


class InvalidEncoding(FormatError):
    code = "invalid_encoding"


class BadMagic(FormatError):
    code = "bad_magic"

    def __init__(self):
        super().__init__("blob does not start with MLD1 magic bytes")


class UnsupportedVersion(FormatError):
    code = "unsupported_version"

    def __init__(self, version: Any):
        super().__init__(f"unsupported container version {version!r}")
        self.version = version


class CorruptHeader(FormatError):
    code = "corrupt_header"

    def __init__(self, reason: str):
        super().__init__(f"corrupt container header: {reason}")
        self.reason = reason


class CorruptPayload(FormatError):
    code = "corrupt_payload"

    def __init__(self, reason: str):
        super().__init__(f"corrupt container payload: {reason}")
        self.reason = reason


class RangeOverlap(FormatError):
    code = "range_overlap"

    def __init__(self, name: str):
        super().__init__(f"array {name!r} overlaps or precedes the previous array")
        self.name = name


class TruncatedPayload(FormatError):
    code = "truncated_payload"

    def __init__(self, expected: int, got: int):
        super().__init__(f"payload truncated: expected at least {expected} bytes, got {got}")
        self.expected = expected
        self.got = got


class UnsupportedConversion(FormatError):
    code = "unsupported_conversion"

    def __init__(self, source: str, target: str):
        super().__init__(f"cannot convert from {source!r} to {target!r}")


# Metrics


class MetricError(ExpDBError):
    status_code = 422
    code = "metric_error"


class EmptyInput(MetricError):
    code = "empty_input"

    def __init__(self, what: str = "input"):
        super().__init__(f"{what} must not be empty")


class LengthMismatch(MetricError):
    code = "length_mismatch"

    def __init__(self, left: int, right: int):
        super().__init__(f"length mismatch: {left} != {right}")


class UnknownLabel(MetricError):
    code = "unknown_label"

    def __init__(self, label: Any):
        super().__init__(f"label {label!r} is not in the class list")
        self.label = label


class SingleClassInput(MetricError):
    code = "single_class_input"

    def __init__(self):
        super().__init__("both classes must be present")


class ScoreOutOfRange(MetricError):
    code = "score_out_of_range"

    def __init__(self, measure: str):
        super().__init__(f"{measure} is too large to represent as a float", [measure])
        self.measure = measure


# Tasks and evaluation


class TargetKindMismatch(ExpDBError):
    status_code = 422
    code = "target_kind_mismatch"


class TooFewInstances(ExpDBError):
    status_code = 422
    code = "too_few_instances"

    def __init__(self, k: int, n: int):
        super().__init__(f"{k} folds requested but only {n} instances available")
        self.k = k
        self.n = n


class InvalidProcedure(ExpDBError):
    status_code = 422
    code = "invalid_procedure"


class InvalidTaskDefinition(ExpDBError):
    status_code = 422
    code = "invalid_task_definition"


class UnknownAttribute(ExpDBError):
    status_code = 422
    code = "unknown_attribute"

    def __init__(self, name: Any):
        super().__init__(f"unknown attribute {name!r}")
        self.name = name


class UnknownMeasure(ExpDBError):
    status_code = 422
    code = "unknown_measure"

    def __init__(self, measure: Any, reason: str = "unknown measure"):
        super().__init__(f"{reason}: {measure!r}")
        self.measure = measure


class ValidationFailed(ExpDBError):
    status_code = 422
    code = "validation_failed"

    def __init__(self, violations: List[Any]):
        super().__init__(
            f"{len(violations)} prediction violation(s)",
            [v.to_dict() if hasattr(v, "to_dict") else v for v in violations],
        )
        self.violations = violations


class PredictionFileError(ExpDBError):
    code = "prediction_file_error"


# Registry


class NotFound(ExpDBError):
    status_code = 404
    code = "not_found"
    entity = "resource"

    def __init__(self, ident: Any):
        super().__init__(f"unknown {self.entity} {ident!r}", [ident])
        self.ident = ident


class UnknownDataset(NotFound):
    code = "unknown_dataset"
    entity = "dataset"


class UnknownTask(NotFound):
    code = "unknown_task"
    entity = "task"


class UnknownFlow(NotFound):
    code = "unknown_flow"
    entity = "flow"


class UnknownRun(NotFound):
    code = "unknown_run"
    entity = "run"


class UnknownChallenge(NotFound):
    code = "unknown_challenge"
    entity = "challenge"


class UnknownParameter(ExpDBError):
    status_code = 422
    code = "unknown_parameter"

    def __init__(self, name: str):
        super().__init__(f"unknown parameter {name!r}")
        self.name = name


class InvalidParameterValue(ExpDBError):
    status_code = 422
    code = "invalid_parameter_value"


class DuplicateParameter(ExpDBError):
    status_code = 422
    code = "duplicate_parameter"

    def __init__(self, name: str):
        super().__init__(f"parameter {name!r} declared more than once")
        self.name = name


class FlowConflict(ExpDBError):
    status_code = 409
    code = "flow_conflict"


class EmptyChallenge(ExpDBError):
    status_code = 422
    code = "empty_challenge"

    def __init__(self):
        super().__init__("a challenge needs at least one task")


class NotAChallengeTask(ExpDBError):
    status_code = 422
    code = "not_a_challenge_task"


class ParseFailed(ExpDBError):
    code = "parse_failed"


class CorruptRecord(ExpDBError):
    status_code = 500
    code = "corrupt_record"

    def __init__(self, log: str, line: int, reason: str):
        super().__init__(f"{log}: corrupt record at line {line}: {reason}")
        self.line = line


class BlobIntegrityError(ExpDBError):
    status_code = 500
    code = "blob_integrity_error"


class BindFailed(ExpDBError):
    status_code = 500
    code = "bind_failed"
