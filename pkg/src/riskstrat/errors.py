"""Exception types raised across the toolkit.

Every error carries a ``category`` used by the command-line front end to
pick an exit status and to print one structured line per failure.
"""


class RiskStratError(Exception):
    category = "internal"


# -- input file and schema problems -------------------------------------------

class InputFileError(RiskStratError):
    category = "file"


class SchemaError(RiskStratError):
    category = "schema"


class MissingColumn(SchemaError):
    def __init__(self, name):
        super().__init__(f"required column {name!r} not found in header")
        self.name = name


class NonBinaryLabel(SchemaError):
    def __init__(self, row, value=None):
        super().__init__(f"label at data row {row} is not binary: {value!r}")
        self.row = row
        self.value = value


class InvalidCode(SchemaError):
    def __init__(self, feature, row, code):
        super().__init__(f"invalid value {code!r} for {feature} at data row {row}")
        self.feature = feature
        self.row = row
        self.code = code


class EmptyCohort(SchemaError):
    def __init__(self, message="cohort has no data rows"):
        super().__init__(message)


class AllMissingColumn(SchemaError):
    def __init__(self, feature):
        super().__init__(f"no observed values for {feature}; cannot impute")
        self.feature = feature


class UnknownLevel(SchemaError):
    def __init__(self, feature, code):
        super().__init__(f"code {code!r} is not a known level of {feature}")
        self.feature = feature
        self.code = code


class DimensionMismatch(SchemaError):
    pass


class UnsupportedVersion(SchemaError):
    def __init__(self, version):
        super().__init__(f"unsupported document version {version!r}")
        self.version = version


# -- training and numerical failures ------------------------------------------

class TrainingError(RiskStratError):
    category = "training"


class SingleClass(TrainingError):
    def __init__(self, message="labels contain a single class"):
        super().__init__(message)


class TooFewPerClass(TrainingError):
    def __init__(self, count, folds):
        super().__init__(f"smallest class has {count} rows, fewer than {folds} folds")
        self.count = count
        self.folds = folds


class NonFinite(TrainingError):
    pass


class UsageError(RiskStratError):
    category = "usage"


class TooManyFeatures(RiskStratError):
    category = "usage"

    def __init__(self, m, limit=20):
        super().__init__(f"exact enumeration over {m} features exceeds the limit of {limit}")
        self.m = m


class IndexOutOfRange(RiskStratError):
    category = "usage"

    def __init__(self, index, n):
        super().__init__(f"instance index {index} outside [0, {n})")
        self.index = index
        self.n = n


class RenderError(RiskStratError):
    category = "rendering"


class ZeroVarianceWarning(UserWarning):
    """A continuous column is constant; it is encoded as all zeros."""
