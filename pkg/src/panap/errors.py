"""Exception hierarchy. Each class carries the process exit code used by the CLI."""


class PanapError(Exception):
    code = "ERROR"
    exit_code = 1


class UsageError(PanapError):
    code = "USAGE"
    exit_code = 2


class DataIOError(PanapError):
    code = "IO"
    exit_code = 3


class SchemaError(PanapError):
    code = "SCHEMA"
    exit_code = 4


class DataError(PanapError):
    code = "DATA"
    exit_code = 4


class SamplingError(DataError):
    code = "SAMPLING"


class GenerationError(DataError):
    code = "GENERATION"


class NumericError(PanapError):
    code = "NUMERIC"
    exit_code = 5


class DimensionError(NumericError, ValueError):
    code = "DIMENSION"


class ArgumentError(UsageError, ValueError):
    code = "ARGUMENT"
