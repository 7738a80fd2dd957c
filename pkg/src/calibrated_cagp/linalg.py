"""Dense triangular solves and Cholesky helpers.

Everything here works on plain ``numpy`` arrays. Right-hand sides may be
vectors of shape ``(d,)`` or matrices of shape ``(d, k)``; matrices are
solved column-batched in a single LAPACK call.
"""

import logging

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefinite, ShapeMismatch, SingularTriangular

logger = logging.getLogger(__name__)

JITTER_LEVELS = (0.0, 1e-10, 1e-8, 1e-6)


def _check_triangular(T, rhs):
    T = np.asarray(T, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ShapeMismatch(f"triangular factor must be square, got {T.shape}")
    if rhs.shape[0] != T.shape[0]:
        raise ShapeMismatch(
            f"rhs has {rhs.shape[0]} rows but the factor is {T.shape[0]}x{T.shape[0]}"
        )
    diag = np.diagonal(T)
    if np.any(diag == 0.0):
        idx = int(np.flatnonzero(diag == 0.0)[0])
        raise SingularTriangular(f"zero diagonal entry at position {idx}")
    return T, rhs


def forward_substitution(L, rhs):
    """Return ``L^{-1} rhs`` for lower-triangular ``L``.

    Entries of ``L`` above the diagonal are ignored.
    """
    L, rhs = _check_triangular(L, rhs)
    return solve_triangular(L, rhs, lower=True, check_finite=False)


def back_substitution(Ut, rhs):
    """Return ``Ut^{-1} rhs`` for upper-triangular ``Ut``.

    Entries of ``Ut`` below the diagonal are ignored. Pass ``L.T`` to apply
    ``L^{-T}``.
    """
    Ut, rhs = _check_triangular(Ut, rhs)
    return solve_triangular(Ut, rhs, lower=False, check_finite=False)


def cholesky(A, jitter=0.0):
    """Lower Cholesky factor of ``A + jitter*I`` with jitter escalation.

    The factorization is first attempted with the requested ``jitter``; on
    failure the jitter is raised through ``JITTER_LEVELS`` (only levels
    larger than the requested one are tried). Any escalation is logged.

    Raises
    ------
    NotPositiveDefinite
        If the matrix is still not positive definite at the last level.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"cholesky needs a square matrix, got {A.shape}")
    levels = [jitter] + [j for j in JITTER_LEVELS if j > jitter]
    eye = np.eye(A.shape[0])
    for level in levels:
        try:
            C = np.linalg.cholesky(A + level * eye if level > 0 else A)
        except np.linalg.LinAlgError:
            continue
        if level > jitter:
            logger.warning("cholesky succeeded after jitter escalation to %g", level)
        return C
    raise NotPositiveDefinite(
        f"matrix of size {A.shape[0]} is not positive definite "
        f"(tried jitter up to {levels[-1]:g})"
    )


def solve_spd(A, rhs):
    """Solve ``A x = rhs`` for symmetric positive definite ``A``."""
    C = cholesky(A)
    return back_substitution(C.T, forward_substitution(C, rhs))


def symmetrize(A):
    return 0.5 * (A + A.T)
