"""Exception types shared across the pipeline."""


class RegimeflowError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(RegimeflowError):
    pass


class NonPositiveMarketCap(ValidationError):
    def __init__(self, stock_id, date, value):
        self.stock_id = stock_id
        self.date = date
        self.value = value
        super().__init__(f"market_cap must be > 0, got {value!r} at ({stock_id}, {date})")


class DuplicateKey(ValidationError):
    def __init__(self, stock_id, date):
        self.stock_id = stock_id
        self.date = date
        super().__init__(f"duplicate (stock_id, date) key: ({stock_id}, {date})")


class UnparseableDate(ValidationError):
    def __init__(self, raw, row_index=None):
        self.raw = raw
        self.row_index = row_index
        at = f" at row {row_index}" if row_index is not None else ""
        super().__init__(f"cannot parse date {raw!r}{at} (expected YYYY-MM-DD)")


class SeriesTooShort(RegimeflowError):
    pass


class EmptyAfterFilters(RegimeflowError):
    pass


class NonPositiveBaseline(RegimeflowError):
    pass


class NonFiniteInput(RegimeflowError):
    pass


class LengthMismatch(RegimeflowError):
    pass


class NonConvergence(RegimeflowError):
    """Optimizer hit iteration limit; best-so-far parameters attached."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class ZeroLikelihood(RegimeflowError):
    pass


class DegenerateRegime(RegimeflowError):
    pass


class InsufficientRegimeSample(RegimeflowError):
    pass


class RankDeficient(RegimeflowError):
    pass


class NoShocks(RegimeflowError):
    pass


class LookaheadViolation(RegimeflowError):
    pass


class ZeroVariance(RegimeflowError):
    pass


class MissingArtifact(RegimeflowError):
    pass


class SchemaMismatch(RegimeflowError):
    pass
