"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its documented status codes without inspecting messages.
"""


class BtbootError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    stage = None

    def with_stage(self, stage):
        self.stage = stage
        return self

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ConfigError(BtbootError, ValueError):
    exit_code = 2


class DataIOError(BtbootError, OSError):
    exit_code = 3


class DataError(BtbootError, ValueError):
    """Malformed input data (schema, parse, key or contiguity problems)."""

    exit_code = 3


class SchemaError(DataError):
    pass


class DuplicateKeyError(DataError):
    pass


class GapError(DataError):
    def __init__(self, series_id, position):
        self.series_id = series_id
        self.position = position
        super().__init__(f"series {series_id!r} has a gap in its time grid at t={position}")


class ParseError(DataError):
    pass


class EmptySliceError(DataError):
    pass


class LookupKeyError(DataError, KeyError):
    def __str__(self):
        return BtbootError.__str__(self)


class NumericalError(BtbootError, ArithmeticError):
    """Degenerate numerics: singular systems, empty resampling sets and similar."""

    exit_code = 4


class SingularMatrixError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class EmptyPlanError(NumericalError):
    pass


class DegenerateRatioError(NumericalError):
    pass


class ProvenanceMismatchError(BtbootError, ValueError):
    exit_code = 4


class PlanSizingError(ConfigError):
    pass
