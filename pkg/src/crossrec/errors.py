"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage/parameter problems -> 2,
data problems -> 3, solver non-convergence -> 4.
"""


class CrossrecError(Exception):
    pass


class DataError(CrossrecError):
    """Bad input data: missing files, malformed rows, schema violations."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class EmptyDatasetError(DataError):
    pass


class DegenerateFeatureError(DataError):
    def __init__(self, item_index, message=None):
        super().__init__(message or f"feature row for item {item_index} has zero norm")
        self.item_index = item_index


class InvalidParameterError(CrossrecError, ValueError):
    """A parameter outside its documented range."""


class ContractError(CrossrecError):
    """An input violates a documented invariant of its type."""


class ConvergenceError(CrossrecError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
