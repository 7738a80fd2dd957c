"""Exception hierarchy shared across the package."""

import numpy as np


class CAGPError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(CAGPError, ValueError):
    pass


class DegenerateGramian(CAGPError, ValueError):
    pass


class SingularTriangular(CAGPError, np.linalg.LinAlgError):
    pass


class NotPositiveDefinite(CAGPError, np.linalg.LinAlgError):
    pass


class NonPositiveDiagonal(CAGPError, np.linalg.LinAlgError):
    pass


class Breakdown(CAGPError, np.linalg.LinAlgError):
    """Conjugate gradients produced a direction with non-positive curvature."""


class OutOfRange(CAGPError, ValueError):
    pass


class NumericalFloor(CAGPError, FloatingPointError):
    """A projected variance fell below the numerical floor."""


class ParseError(CAGPError, ValueError):
    pass


class DuplicateRows(CAGPError, ValueError):
    pass


class MissingColumn(CAGPError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class AllCandidatesFailed(CAGPError, RuntimeError):
    pass


class ConfigError(CAGPError, ValueError):
    pass
