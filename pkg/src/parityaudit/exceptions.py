"""Exception hierarchy.

Two families: :class:`DataError` for malformed or inconsistent input (CLI
exit code 2) and :class:`EstimationError` for statistical procedures that
cannot produce an answer on valid input (CLI exit code 3).
"""


class ParityAuditError(Exception):
    pass


class DataError(ParityAuditError, ValueError):
    pass


class SchemaError(DataError):
    pass


class GroupConsistencyError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EstimationError(ParityAuditError, RuntimeError):
    pass


class NoMassError(EstimationError):
    pass


class InsufficientClustersError(EstimationError):
    pass


class DegenerateOutcomeError(EstimationError):
    pass


class DimensionalityError(EstimationError):
    pass


class NoSolutionError(EstimationError):
    pass


class NonInvertibleError(EstimationError):
    pass
