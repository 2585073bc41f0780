"""Exception types raised across the package."""


class KlabError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(KlabError, ValueError):
    """A scalar hyper-parameter is outside its admissible range."""


class InvalidInputError(KlabError, ValueError):
    """An input array is empty, non-finite or otherwise malformed."""


class DegenerateVectorError(KlabError, ValueError):
    """A vector is too close to zero to be normalized."""


class ShapeError(KlabError, ValueError):
    """Array dimensions do not agree."""


class NormalizationError(KlabError, ValueError):
    """A row carries no mass and cannot be renormalized."""


class InfiniteDivergenceError(KlabError, ValueError):
    """q puts mass where p has none, so KL(q || p) is infinite."""


class InvalidDistributionError(KlabError, ValueError):
    """A probability vector has negative entries or does not sum to one."""


class InsufficientSamplesError(KlabError, ValueError):
    """Fewer samples were requested than there are mixture components."""


class CalibrationError(KlabError, ValueError):
    """The temperature calibration equation has no positive solution."""


class DivergenceError(KlabError, ArithmeticError):
    """Training produced a non-finite or exploding loss."""
