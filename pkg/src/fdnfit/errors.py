"""Exception hierarchy shared by every module."""


class FdnFitError(Exception):
    """Base class for all library errors."""


class InvalidInputError(FdnFitError, ValueError):
    """Input data violates a documented precondition."""


class FormatError(InvalidInputError):
    """A file is malformed (bad RIFF/WAVE header, bad JSON schema...)."""


class UnsupportedError(InvalidInputError):
    """Well-formed input using an unsupported encoding or option."""


class DegenerateInputError(InvalidInputError):
    """All-zero or otherwise empty signal where energy is required."""


class InsufficientDecayError(InvalidInputError):
    """An energy decay curve does not decay far enough for the requested fit."""


class InfiniteClarityError(InvalidInputError):
    """Clarity is undefined because there is no energy after 80 ms."""


class ShapeError(FdnFitError, ValueError):
    """Tensor shapes do not conform for the requested operation."""


class ContractError(FdnFitError, ValueError):
    """A function was called outside of its contract."""


class DivergenceError(FdnFitError, FloatingPointError):
    """The training loss became non-finite."""

    def __init__(self, iteration, value):
        super().__init__(f"loss became non-finite ({value}) at iteration {iteration}")
        self.iteration = iteration
        self.value = value
