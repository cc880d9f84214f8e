"""Exception hierarchy shared by every module.

Each class carries a short ``code`` that the CLI prints and maps to an exit status.
"""


class IntentSanError(Exception):
    code = "E_GENERIC"
    exit_status = 1


class DimensionError(IntentSanError, ValueError):
    code = "E_DIM"
    exit_status = 9


class PreconditionError(IntentSanError, ValueError):
    code = "E_PRECONDITION"
    exit_status = 10


class NumericError(IntentSanError, ArithmeticError):
    code = "E_NUMERIC"
    exit_status = 7


class UsageError(IntentSanError, RuntimeError):
    code = "E_USAGE"
    exit_status = 11


class ConfigError(IntentSanError, ValueError):
    code = "E_CONFIG"
    exit_status = 3


class DataError(IntentSanError, ValueError):
    code = "E_DATA"
    exit_status = 4


class ParseError(DataError):
    code = "E_PARSE"
    exit_status = 4


class CheckpointError(IntentSanError):
    code = "E_CHECKPOINT"
    exit_status = 5


class CorruptCheckpointError(CheckpointError):
    code = "E_CHECKPOINT_CORRUPT"


class ArchitectureMismatchError(CheckpointError):
    code = "E_ARCH_MISMATCH"


class VocabIndexError(IntentSanError, IndexError):
    code = "E_VOCAB_INDEX"
    exit_status = 12


class LabelMismatchError(DataError):
    code = "E_LABEL_MISMATCH"
    exit_status = 13


class MissingPathError(DataError):
    code = "E_MISSING_PATH"
    exit_status = 14
