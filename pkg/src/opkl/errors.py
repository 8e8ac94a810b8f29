"""Exception types raised across the package."""

import numpy as np


class OpklError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(OpklError, ValueError):
    """An argument is outside its admissible range."""


class ShapeError(OpklError, ValueError):
    """Operands have inconsistent grids or dimensions."""


class NumericError(OpklError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class LinearSolveError(OpklError, np.linalg.LinAlgError):
    """A kernel system could not be factorized."""


class StepSizeWarning(RuntimeWarning):
    """Step size exceeds an advisory stability bound."""
