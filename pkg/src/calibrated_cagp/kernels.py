"""Matérn kernels, cross-covariances and Gramian assembly."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateGramian, DuplicateRows, ShapeMismatch

FAMILIES = ("matern_half", "matern_three_half", "matern_five_half")

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


def _matern_half(u):
    return np.exp(-u)


def _matern_three_half(u):
    su = _SQRT3 * u
    return (1.0 + su) * np.exp(-su)


def _matern_five_half(u):
    su = _SQRT5 * u
    return (1.0 + su + su * su / 3.0) * np.exp(-su)


_CORRELATIONS = {
    "matern_half": _matern_half,
    "matern_three_half": _matern_three_half,
    "matern_five_half": _matern_five_half,
}


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic Matérn kernel ``amplitude * rho(r / lengthscale)``.

    ``family`` is one of ``"matern_half"``, ``"matern_three_half"`` or
    ``"matern_five_half"``.
    """

    family: str = "matern_three_half"
    lengthscale: float = 0.2
    amplitude: float = 1.0

    def __post_init__(self):
        if self.family not in _CORRELATIONS:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")

    def correlation(self, r):
        """Correlation as a function of (unscaled) Euclidean distance."""
        return _CORRELATIONS[self.family](np.asarray(r, dtype=float) / self.lengthscale)

    def with_lengthscale(self, lengthscale):
        return KernelSpec(self.family, float(lengthscale), self.amplitude)


def as_points(X):
    """Coerce to a 2-D ``(count, dim)`` float array; 1-D input is a column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeMismatch(f"point sets must be 1-D or 2-D, got shape {X.shape}")
    return X


def check_distinct(X):
    X = as_points(X)
    if len(np.unique(X, axis=0)) != len(X):
        raise DuplicateRows("training point set contains duplicate rows")
    return X


def kernel_eval(spec, x, x2):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    return float(spec.amplitude * spec.correlation(np.linalg.norm(x - x2)))


def kernel_matrix(spec, A, B=None):
    """Cross-covariance ``K[i, j] = k(A_i, B_j)``; ``B=None`` means ``B = A``."""
    A = as_points(A)
    B = A if B is None else as_points(B)
    if len(A) == 0 or len(B) == 0:
        raise ShapeMismatch("kernel_matrix needs nonempty point sets")
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    K = spec.amplitude * spec.correlation(cdist(A, B))
    if B is A:
        K = 0.5 * (K + K.T)
    return K


@dataclass(eq=False)
class GramianSystem:
    """Dense SPD training covariance ``G = K(X, X) + noise_variance * I``.

    The Gauss-Seidel split ``G = L + U`` is exposed through ``lower`` (with
    diagonal), ``strict_upper`` and ``diagonal``; the views are computed once
    and cached.
    """

    matrix: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ShapeMismatch(f"Gramian must be square, got {self.matrix.shape}")
        diag = np.diagonal(self.matrix)
        if np.any(diag <= 0):
            raise DegenerateGramian(
                f"Gramian has a non-positive diagonal entry at {int(np.argmin(diag))}"
            )

    @property
    def size(self):
        return self.matrix.shape[0]

    @cached_property
    def lower(self):
        return np.tril(self.matrix)

    @cached_property
    def strict_upper(self):
        return np.triu(self.matrix, 1)

    @cached_property
    def diagonal(self):
        return np.diagonal(self.matrix).copy()

    def __matmul__(self, other):
        return self.matrix @ other


def gramian(spec, X, noise_variance):
    if noise_variance < 0:
        raise ValueError(f"noise_variance must be nonnegative, got {noise_variance}")
    X = check_distinct(X)
    G = kernel_matrix(spec, X)
    G[np.diag_indices_from(G)] += noise_variance
    return GramianSystem(G, float(noise_variance))
