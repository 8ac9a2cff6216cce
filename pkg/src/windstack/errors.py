"""Exception types shared across the package.

Everything raised on purpose derives from WindstackError so callers can
catch one base class at the CLI boundary and map it to an exit code.
"""


class WindstackError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ConfigError(WindstackError):
    """Bad or inconsistent configuration values."""


class InvalidConfig(ConfigError):
    def __init__(self, detail):
        super().__init__(detail)


class DataError(WindstackError):
    """Input data violates a structural requirement."""


class NumericalError(WindstackError):
    """A numerical routine failed to produce a usable result."""


# ---------------------------------------------------------------------------
# data / ingest

class TooFewRows(DataError):
    def __init__(self, needed, got):
        self.needed = needed
        self.got = got
        super().__init__(f"need at least {needed} rows, got {got}")


class MissingColumn(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing required column {name!r}")


class MalformedNumber(DataError):
    def __init__(self, row, column, text):
        self.row = row
        self.column = column
        self.text = text
        super().__init__(
            f"row {row}: bad value in column {column!r}: {text!r}")


class SchemaMismatch(DataError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"expected columns {expected}, got {got}")


class BadFoldCount(ConfigError):
    def __init__(self, k, n):
        self.k = k
        self.n = n
        super().__init__(f"cannot split {n} rows into {k} folds")


class MultiYearSpan(DataError):
    def __init__(self, years):
        self.years = sorted(years)
        super().__init__(
            "quarterly split needs a single calendar year, data spans "
            + ", ".join(str(y) for y in self.years))


class EmptyInput(DataError):
    def __init__(self, what="input"):
        super().__init__(f"{what} is empty")


class NonFiniteInput(DataError):
    def __init__(self, where):
        super().__init__(f"non-finite values in {where}")


class LengthMismatch(DataError):
    def __init__(self, a, b):
        super().__init__(f"length mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# clustering

class KTooLarge(ConfigError):
    def __init__(self, k, n):
        self.k = k
        self.n = n
        super().__init__(f"k={k} exceeds number of rows n={n}")


class DegenerateComponent(NumericalError):
    def __init__(self, component, weight):
        self.component = component
        self.weight = weight
        super().__init__(
            f"mixture component {component} collapsed (weight {weight:.3g})")


class Unreachable(NumericalError):
    """Canopy threshold search could not hit the requested cluster count."""

    def __init__(self, wanted, achieved):
        self.wanted = wanted
        self.achieved = achieved
        super().__init__(
            f"could not reach k={wanted} canopies, closest was {achieved}")


# ---------------------------------------------------------------------------
# models

class IncompatibleFeatureSpace(DataError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(
            f"model was fit on {expected} features, input has {got}")


class SingularSystem(NumericalError):
    def __init__(self, detail=""):
        msg = "linear system is singular"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class RankDeficient(NumericalError):
    def __init__(self, rank, cols):
        self.rank = rank
        self.cols = cols
        super().__init__(f"design matrix has rank {rank} < {cols} columns")


class NotFitted(WindstackError):
    def __init__(self, what):
        super().__init__(f"{what} has not been fitted yet")


# ---------------------------------------------------------------------------
# statistics

class DegenerateMean(NumericalError):
    def __init__(self, what="mean"):
        super().__init__(f"{what} too close to zero to normalize by")


class TooFewGroups(DataError):
    def __init__(self, needed, got):
        super().__init__(f"need at least {needed} groups, got {got}")


class TooFewValues(DataError):
    def __init__(self, needed, got):
        super().__init__(f"need at least {needed} values, got {got}")


class NonConvergence(NumericalError):
    def __init__(self, what, detail=""):
        msg = f"{what} failed to converge"
        if detail:
            msg = f"{msg} ({detail})"
        super().__init__(msg)


# ---------------------------------------------------------------------------
# serialization

class BadModelDocument(DataError):
    def __init__(self, detail):
        super().__init__(f"cannot load model document: {detail}")


class UnknownModelKind(DataError):
    def __init__(self, kind):
        self.kind = kind
        super().__init__(f"unknown model kind {kind!r}")
