"""Exception hierarchy shared by every subpackage.

The CLI maps each class to a distinct nonzero exit code.
"""


class WSAError(Exception):
    exit_code = 1


class DimensionError(WSAError, ValueError):
    exit_code = 2


class StateError(WSAError, RuntimeError):
    exit_code = 3


class ConfigError(WSAError, ValueError):
    exit_code = 4


class DataError(WSAError, ValueError):
    exit_code = 5


class TrainingError(WSAError, RuntimeError):
    exit_code = 6


class UnsupportedCombinerError(ConfigError):
    exit_code = 7


class CheckpointError(WSAError, OSError):
    exit_code = 8
