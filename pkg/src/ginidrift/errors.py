"""Exception hierarchy.

Two families matter to callers: :class:`DataError` for malformed or
inconsistent inputs, and :class:`DegeneracyError` for inputs that are
well-formed but make a statistic undefined (no claims, zero spread, ...).
The CLI maps them to distinct exit codes.
"""


class GiniDriftError(Exception):
    """Base class for all package errors."""


class DataError(GiniDriftError):
    pass


class DegeneracyError(GiniDriftError):
    pass


class MissingColumn(DataError):
    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")


class ParseError(DataError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}: cannot parse {value!r} in column {column!r}")


class ZeroExposure(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row}: exposure must be > 0")


class InvalidRecord(DataError):
    def __init__(self, row, reason):
        self.row = row
        super().__init__(f"row {row}: {reason}")


class InsufficientExposure(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row}: exposure smaller than response x day_fraction")


class MixedPredictionPresence(DataError):
    pass


class MissingPrediction(DataError):
    def __init__(self, row=None):
        self.row = row
        super().__init__("dataset carries no predictions" if row is None
                         else f"row {row}: missing prediction")


class NonpositivePrediction(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row}: predicted count must be > 0")


class UnseenLevel(DataError):
    def __init__(self, covariate, value):
        self.covariate, self.value = covariate, value
        super().__init__(f"covariate {covariate!r}: value {value!r} not in design")


class RankDeficientDesign(DataError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; dependent columns: {self.columns}")


class NonConvergence(GiniDriftError):
    def __init__(self, iterations, gradient_norm):
        self.iterations, self.gradient_norm = iterations, gradient_norm
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(gradient max-norm {gradient_norm:.3e})")


class InsufficientClaimsInSource(DataError):
    pass


class InsufficientNewData(DataError):
    pass


class InsufficientTargetRecords(DataError):
    pass


class DisjointnessViolation(DataError):
    pass


class EmptyGroup(DataError):
    pass


class EmptyInput(DegeneracyError):
    pass


class ZeroTotalResponse(DegeneracyError):
    pass


class DegenerateDenominator(DegeneracyError):
    pass


class DegenerateResamples(DegeneracyError):
    pass


class ZeroSd(DegeneracyError):
    pass


class ConvergenceWarning(UserWarning):
    pass
