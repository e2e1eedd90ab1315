"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MichError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(MichError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class DegenerateWeightsError(MichError, ValueError):
    """A weight or prior vector carries no finite mass."""


class DataError(MichError, ValueError):
    """Input data are malformed (non-finite values, wrong shape, bad counts)."""


class NumericalFailure(MichError, ArithmeticError):
    """A fit produced a non-finite objective or otherwise broke down."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class EstimatorFailure(MichError, ValueError):
    """A plug-in estimator cannot be formed from the available data."""
