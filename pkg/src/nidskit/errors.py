"""Exception types shared across the toolkit."""


class NidskitError(Exception):
    """Base class for all toolkit errors."""


class DataError(NidskitError):
    """Input data is missing, malformed, or inconsistent (CLI exit code 2)."""


# pcap reading
class UnknownMagic(DataError):
    pass


class TruncatedHeader(DataError):
    pass


# flow features
class EmptyFlow(DataError):
    pass


class SchemaMismatch(DataError):
    pass


# labeling
class MalformedRule(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"schedule line {line_no}: {message}")
        self.line_no = line_no


class TargetExceedsPopulation(DataError):
    pass


# dataset ops
class HeaderMismatch(DataError):
    pass


class RaggedRow(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"row at line {line_no}: {message}")
        self.line_no = line_no


class UnknownAttack(DataError):
    pass


# feature selection
class KOutOfRange(DataError):
    pass


# metrics
class SingleClassLabels(DataError):
    pass


# experiments
class SchemaIncompatible(DataError):
    def __init__(self, train, test):
        super().__init__(f"schema of train set {train!r} does not match test set {test!r}")
        self.train = train
        self.test = test


class AttackAbsent(DataError):
    def __init__(self, attack, source):
        super().__init__(f"attack {attack!r} not available in {source!r}")
        self.attack = attack
        self.source = source


class DegenerateTraining(UserWarning):
    """Training labels contain a single class; a constant-score model is returned."""
