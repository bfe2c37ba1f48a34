"""Exception hierarchy.

``InputError`` covers malformed or inconsistent inputs (CLI exit code 1);
``NumericalError`` covers computations that cannot produce a defined result
(CLI exit code 2).
"""


class InputError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class EmbeddingLoadError(InputError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class UnencodableLabelError(InputError):
    def __init__(self, label, index=None):
        where = f" (index {index})" if index is not None else ""
        super().__init__(f"label {label!r}{where} has no in-vocabulary tokens")
        self.label = label
        self.index = index


class DegenerateEncodingError(NumericalError):
    pass
