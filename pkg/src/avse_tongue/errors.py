"""Exception hierarchy shared across the package.

Each class carries an ``exit_code`` so the command-line front end can map a
failure category to a process status.
"""


class AVSEError(Exception):
    exit_code = 1


class ConfigError(AVSEError, ValueError):
    exit_code = 2


class DimensionError(AVSEError, ValueError):
    exit_code = 3


class LengthError(DimensionError):
    pass


class AlignmentError(DimensionError):
    pass


class DegenerateInputError(AVSEError, ValueError):
    exit_code = 4


class DataError(AVSEError, ValueError):
    exit_code = 5


class LoadError(DataError, OSError):
    pass


class CheckpointFormatError(AVSEError, ValueError):
    exit_code = 6


class ModalityError(AVSEError, ValueError):
    exit_code = 7
