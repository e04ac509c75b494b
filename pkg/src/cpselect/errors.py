"""Exception hierarchy shared by the library and the CLI."""


class CpSelectError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(CpSelectError):
    """Malformed or unusable input data."""

    exit_code = 3


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, column, row, value):
        self.column = column
        self.row = row
        self.value = value
        super().__init__(f"non-numeric value {value!r} in column {column!r} at row {row}")


class EmptyFile(DataError):
    pass


class NumericalError(CpSelectError):
    """A guard or aggregation failure: the requested quantity is undefined."""

    exit_code = 4


class SingularDesign(NumericalError):
    pass


class NoUsableDatasets(NumericalError):
    pass


class TooManySubsets(CpSelectError):
    exit_code = 2
