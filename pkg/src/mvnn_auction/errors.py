"""Exception types shared across the package."""


class MvnnAuctionError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MvnnAuctionError):
    """Mismatched item counts or layer widths."""


class FeasibilityError(MvnnAuctionError):
    """An allocation assigns some item to more than one bidder."""


class DegenerateInstanceError(MvnnAuctionError):
    """A metric denominator (optimal welfare) is not strictly positive."""


class ParameterError(MvnnAuctionError):
    """An invalid numeric parameter, e.g. a non-positive bReLU cutoff."""


class ConstraintViolationError(MvnnAuctionError):
    """Network parameters violate the sign constraints where projected
    parameters are required."""


class DataError(MvnnAuctionError):
    """Malformed input data (duplicate bundles, negative values, ...)."""


class MonotonicityError(MvnnAuctionError):
    """A value table or dataset admits no monotone extension.

    Carries a witness pair of bundles (small, large) with
    value(small) > value(large).
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class TrainingFailureError(MvnnAuctionError):
    """Every training retry diverged. Carries the best attempt seen."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InstanceTooLargeError(MvnnAuctionError):
    """Instance exceeds the supported desk-scale enumeration limits."""


class SolverError(MvnnAuctionError):
    """Numerical failure or unsupported problem shape in the LP/MILP solver."""


class LpParseError(MvnnAuctionError):
    """Malformed LP-format text. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(MvnnAuctionError):
    """Inconsistent or invalid run configuration."""


class QueryExhaustedError(MvnnAuctionError):
    """A bidder has no unreported bundle left to query."""
