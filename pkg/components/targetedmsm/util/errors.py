import typing as T

import numpy as np


class TargetedMsmError(Exception):
    """base of every failure the engine reports to its callers

    @note `code` is stable and ends up in the CLI's error JSON
    """

    code: str = "targeted_msm_error"

    def __init__(self, message: str, **detail: T.Any):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "detail": {k: _plain(v) for k, v in self.detail.items() if k != "fit"},
        }


class EvaluationError(TargetedMsmError):
    code = "evaluation"

    def __init__(self, primitive: str, reason: str):
        super().__init__(f"{primitive}: {reason}", primitive=primitive)
        self.primitive = primitive


class NonConvergenceError(TargetedMsmError):
    code = "nonconvergence"

    @property
    def fit(self) -> T.Any:
        return self.detail.get("fit")


class RankDeficiencyError(TargetedMsmError):
    code = "rank_deficient"


class SingularMatrixError(TargetedMsmError):
    code = "singular_normalizer"


class PositivityError(TargetedMsmError):
    code = "positivity"


class InsufficientDataError(TargetedMsmError):
    code = "insufficient_data"


class DegenerateMapError(TargetedMsmError):
    code = "degenerate_map"


class InitializationError(TargetedMsmError):
    code = "chain_initialization"


class InvalidLossError(TargetedMsmError):
    code = "invalid_loss"


class HarnessError(TargetedMsmError):
    code = "harness"


class DataError(TargetedMsmError):
    code = "data"


class ConfigError(TargetedMsmError):
    code = "config"


# raised by preconditions and numpy rather than by the engine itself
ESCAPED: T.Dict[T.Type[Exception], str] = {
    AssertionError: "precondition",
    np.linalg.LinAlgError: "linear_algebra",
}

REPORTED: T.Tuple[T.Type[Exception], ...] = (TargetedMsmError, *ESCAPED)


def error_code(e: Exception) -> str:
    if isinstance(e, TargetedMsmError):
        return e.code

    return next((code for kind, code in ESCAPED.items() if isinstance(e, kind)), "internal")


def error_document(e: Exception) -> dict:
    """the code, message and detail of any reported failure"""
    if isinstance(e, TargetedMsmError):
        return e.to_dict()

    return {"code": error_code(e), "message": str(e) or type(e).__name__, "detail": {}}


def _plain(value: T.Any) -> T.Any:
    if hasattr(value, "tolist"):
        return value.tolist()

    if isinstance(value, (list, tuple)):
        return [_plain(e) for e in value]

    return value
