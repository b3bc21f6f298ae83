"""Exception hierarchy shared by every module."""


class AFMVCError(Exception):
    """Base class for all errors raised by the package."""


class StructuralError(AFMVCError, ValueError):
    """Shapes, row counts or widths do not line up."""


class ParseError(AFMVCError, ValueError):
    """A numeric table could not be parsed."""

    def __init__(self, path, row, column, value):
        self.path, self.row, self.column, self.value = path, row, column, value
        super().__init__(f"{path}: row {row}, column {column}: cannot parse {value!r} as a number")


class BoundsError(AFMVCError, IndexError):
    """A count or index lies outside its admissible range."""


class ContractError(AFMVCError, RuntimeError):
    """A precondition on call order or input state was violated."""


class DomainError(AFMVCError, ValueError):
    """A scalar argument lies outside the mathematical domain of a function."""


class NonFiniteError(AFMVCError, FloatingPointError):
    """A loss, gradient or parameter became NaN or infinite."""


class SamplingError(AFMVCError, RuntimeError):
    """Rejection sampling exhausted its retry budget."""
