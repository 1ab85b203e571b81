from typing import Any, Optional


class NLQCError(Exception):
    """Base class for every failure raised by the lab."""


class PreconditionError(NLQCError, ValueError):
    pass


class DimensionMismatchError(PreconditionError):
    pass


class SupportError(PreconditionError):
    pass


class NonUnitaryError(PreconditionError):
    pass


class NonPositiveError(PreconditionError):
    pass


class SingularOperatorError(NLQCError):
    def __init__(self, singular_value: float, message: Optional[str] = None):
        self.singular_value = singular_value
        super().__init__(message or f"Operator is singular: smallest singular value {singular_value:.3e}")


class CapExceededError(PreconditionError):
    pass


class UnsupportedModelError(PreconditionError):
    pass


class SpreadPreconditionError(PreconditionError):
    pass


class UnassignableGateError(NLQCError):
    def __init__(self, gate: Any, message: str):
        self.gate = gate
        super().__init__(message)


class SupportViolationError(NLQCError):
    def __init__(self, piece: str, witness: str, norm: float):
        self.piece = piece
        self.witness = witness
        self.norm = norm
        super().__init__(f"Piece {piece} acts outside its declared region: ||[{piece}, {witness}]|| = {norm:.3e}")


class IncompleteDecompositionError(NLQCError):
    pass


class FitError(NLQCError):
    pass


class MissingCorrelatorError(NLQCError, KeyError):
    def __init__(self, request: Any):
        self.request = request
        super().__init__(f"Reference oracle has no value for correlator {request!r}")

    def __str__(self) -> str:
        return str(self.args[0])


class LogicalOperatorError(PreconditionError):
    pass


class CodeStructureError(PreconditionError):
    pass


class GeometryError(NLQCError):
    def __init__(self, block: int, half: str, message: Optional[str] = None):
        self.block = block
        self.half = half
        super().__init__(message or f"Block {block}: marked logical is not recoverable on half {half}")


class InsufficientAncillaError(NLQCError):
    pass


class AlignmentError(NLQCError):
    pass


class LocalityViolationError(NLQCError):
    def __init__(self, event: Any, message: str):
        self.event = event
        super().__init__(message)


class NonIsometricError(PreconditionError):
    pass


class IsometryDefectError(NLQCError):
    pass


class OracleSanityError(NLQCError):
    pass


class CertificateInputError(PreconditionError):
    pass


class POVMCompletenessError(NLQCError):
    pass


class ClassicalRecordError(NLQCError):
    pass


class ConfigError(NLQCError):
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class VerificationFailure(NLQCError):
    def __init__(self, message: str, result: Optional[dict] = None):
        self.result = result or {}
        super().__init__(message)


class ReportSchemaError(NLQCError):
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
