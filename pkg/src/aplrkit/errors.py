"""Exception types shared across the pipeline.

The CLI maps each class to a process exit code.
"""


class AplrError(Exception):
    exit_code = 1


class ConfigError(AplrError, ValueError):
    exit_code = 2


class DataError(AplrError, ValueError):
    exit_code = 3


class NumericError(AplrError, ArithmeticError):
    exit_code = 4
