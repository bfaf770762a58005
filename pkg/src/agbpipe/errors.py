"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``code`` and the process exit
code the CLI maps it to (0 success, 2 config, 3 data, 4 numeric fault).
"""


class AgbError(Exception):
    code = "E_ERROR"
    exit_code = 1


class InvalidArgument(AgbError, ValueError):
    """Operation preconditions violated (shape, divisibility, range)."""

    code = "E_INVALID"
    exit_code = 2


class ConfigError(AgbError):
    code = "E_CONFIG"
    exit_code = 2


class DataError(AgbError):
    code = "E_DATA"
    exit_code = 3


class ParseError(DataError):
    code = "E_PARSE"
    exit_code = 3


class EmptyLabelsError(DataError):
    code = "E_EMPTY_LABELS"
    exit_code = 3


class EmptySplitError(DataError):
    code = "E_EMPTY_SPLIT"
    exit_code = 3


class CheckpointError(DataError):
    code = "E_CKPT"
    exit_code = 3


class TrainingFault(AgbError, RuntimeError):
    """Non-finite loss or gradient encountered during optimization."""

    code = "E_NAN"
    exit_code = 4
