"""Probabilistic linear solvers under the inverse prior ``N(0, G^{-1})``.

Every solver returns a :class:`ProjectedBelief`: the solver posterior
``N(v_bar, G^{-1} - D)`` pushed through ``v -> V v`` with the ``G^{-1}`` term
dropped, i.e. ``(V v_bar, V D V^T)``. The ``G^{-1}`` part cancels when the
belief is marginalised into a GP posterior, so it is never formed.

Three solvers are provided:

* :func:`cagp_pls_gs` -- probabilistic Gauss-Seidel. The downdate is built
  from the non-recursive sum of Gramians and never materialises a ``d x d``
  matrix.
* :func:`cagp_pls_cg` -- Bayesian PLS with conjugate-gradient directions.
* :func:`cagp_pls_rand` -- Bayesian PLS with IID Gaussian directions.

:func:`psim_downdate_recursion` is a dense ``O(d^3)`` reference used by the
tests.
"""

from dataclasses import dataclass

import numpy as np

from .errors import Breakdown, NonPositiveDiagonal, NotPositiveDefinite, ShapeMismatch
from .kernels import GramianSystem
from .linalg import back_substitution, cholesky, forward_substitution, symmetrize

SOLVER_KINDS = ("gauss_seidel", "conjugate_gradient", "random_directions", "exact")

SOLVER_LABELS = {
    "gauss_seidel": "CAGP-GS",
    "conjugate_gradient": "CAGP-CG",
    "random_directions": "CAGP-Rand",
    "exact": "GP",
}

_ALIASES = {
    "gs": "gauss_seidel",
    "cg": "conjugate_gradient",
    "rand": "random_directions",
    "random": "random_directions",
}


def solver_kind(name):
    """Normalise a solver name (``"gs"``, ``"CAGP-CG"``, ...) to a kind."""
    key = name.strip().lower()
    key = key[5:] if key.startswith("cagp-") else key
    key = _ALIASES.get(key, key)
    if key not in SOLVER_KINDS:
        raise ValueError(f"unknown solver {name!r}; expected one of {SOLVER_KINDS}")
    return key


@dataclass(frozen=True)
class SolverChoice:
    """Which solver to run, for how many iterations, and (for random
    directions) which seed draws the search directions.

    ``kind="exact"`` selects the dense Cholesky posterior and ignores
    ``iterations``.
    """

    kind: str
    iterations: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", solver_kind(self.kind))
        if self.iterations < 0:
            raise ValueError(f"iterations must be nonnegative, got {self.iterations}")

    @property
    def label(self):
        return SOLVER_LABELS[self.kind]


@dataclass
class ProjectedBelief:
    """``projected_mean`` is ``V v_bar``; ``projected_downdate`` is ``V D V^T``.

    When the solver was given several right-hand sides as columns of ``b``,
    ``projected_mean`` has one column per right-hand side.
    """

    projected_mean: np.ndarray
    projected_downdate: np.ndarray
    iterations: int


def _as_gramian(G):
    return G if isinstance(G, GramianSystem) else GramianSystem(G)


def _check_inputs(G, b, V):
    b = np.asarray(b, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    d = G.size
    if b.shape[0] != d:
        raise ShapeMismatch(f"b has {b.shape[0]} rows, Gramian is {d}x{d}")
    if V.shape[1] != d:
        raise ShapeMismatch(f"V has {V.shape[1]} columns, Gramian is {d}x{d}")
    return b, V


def _empty_belief(b, V):
    shape = (V.shape[0],) + b.shape[1:]
    return ProjectedBelief(np.zeros(shape), np.zeros((V.shape[0], V.shape[0])), 0)


def gauss_seidel_sweep(G, v, b):
    """One Gauss-Seidel update ``L^{-1} (b - U v)``."""
    G = _as_gramian(G)
    return forward_substitution(G.lower, np.asarray(b, dtype=float) - G.strict_upper @ v)


def gs_iterates(G, b, V, m_max, downdate="full"):
    """Yield ``(i, projected belief)`` after each Gauss-Seidel iteration.

    ``downdate`` is ``"full"`` for the whole ``d_test x d_test`` matrix,
    ``"diag"`` for its diagonal only (returned as a vector), or ``None`` to
    skip the covariance work entirely.
    """
    G = _as_gramian(G)
    b, V = _check_inputs(G, b, V)
    L, U = G.lower, G.strict_upper
    dg = G.diagonal
    if np.any(dg <= 0):
        raise NonPositiveDiagonal("Gauss-Seidel downdate needs a positive diagonal")
    sqrt_dg = np.sqrt(dg)[:, None]
    Lt = L.T

    z = forward_substitution(L, b)
    v = z
    Z = back_substitution(Lt, V.T) if downdate else None
    if downdate == "full":
        acc = np.zeros((V.shape[0], V.shape[0]))
    elif downdate == "diag":
        acc = np.zeros(V.shape[0])
    else:
        acc = None

    for i in range(1, m_max + 1):
        if i > 1:
            v = z - forward_substitution(L, U @ v)
            if downdate:
                # U^T = strictly lower part of G
                Z = back_substitution(Lt, U.T @ Z)
        if downdate == "full":
            Zt = sqrt_dg * Z
            acc += Zt.T @ Zt
        elif downdate == "diag":
            acc += np.einsum("ij,ij->j", Z, dg[:, None] * Z)
        yield i, ProjectedBelief(V @ v, acc, i)


def cagp_pls_gs(G, b, V, m):
    """Probabilistic Gauss-Seidel projected through ``V``.

    Parameters
    ----------
    G : GramianSystem or array_like, shape (d, d)
    b : array_like, shape (d,) or (d, k)
        Right-hand side(s). The downdate does not depend on ``b``, so several
        right-hand sides can share one call.
    V : array_like, shape (d_test, d)
    m : int
        Number of sweeps from ``v_0 = 0``.

    Returns
    -------
    ProjectedBelief
        ``V v_m`` and ``sum_i Zt_i^T Zt_i`` with ``Z_1 = L^{-T} V^T``,
        ``Z_i = L^{-T} U^T Z_{i-1}`` and ``Zt_i = D_G^{1/2} Z_i``.
    """
    G = _as_gramian(G)
    b, V = _check_inputs(G, b, V)
    if m == 0:
        return _empty_belief(b, V)
    belief = None
    for _, belief in gs_iterates(G, b, V, m):
        pass
    belief.projected_downdate = symmetrize(belief.projected_downdate)
    return belief


def _g_orthogonalize(x, P, GP, max_passes=6):
    """Remove from ``x`` its ``G``-projection onto the columns of ``P``.

    Passes repeat while a pass shrinks the vector by more than ``1/sqrt(2)``,
    the usual "twice is enough" test extended for heavy cancellation.
    """
    x = x.copy()
    norm = np.linalg.norm(x)
    for _ in range(max_passes):
        x -= P @ (GP.T @ x)
        new_norm = np.linalg.norm(x)
        if new_norm > 0.7071 * norm:
            break
        norm = new_norm
    return x


def cg_iterates(G, b, V, m_max, reorthogonalize=True):
    """Yield ``(i, projected belief, s_i, s_i^T G s_i)`` after each CG step.

    With ``reorthogonalize`` each new direction is the current residual
    ``G``-orthogonalised (repeated Gram-Schmidt) against all previous
    directions. In exact arithmetic these are the usual CG directions; in
    floating point this keeps ``S^T G S`` diagonal after the residual has
    converged, which the diagonal-inverse downdate relies on. Without it the
    textbook ``s = r + beta * s`` recurrence is used.

    The generator stops early if the residual becomes exactly zero.
    """
    G = _as_gramian(G)
    b, V = _check_inputs(G, b, V)
    if b.ndim != 1:
        raise ShapeMismatch("conjugate gradients take a single right-hand side")
    A = G.matrix
    d = G.size
    v = np.zeros_like(b)
    r = b.copy()
    s = r.copy()
    rr = r @ r
    # G-normalised directions and their images, filled column by column
    P = np.empty((d, min(m_max, d)))
    GP = np.empty_like(P)
    acc = np.zeros((V.shape[0], V.shape[0]))
    for i in range(1, m_max + 1):
        if rr == 0.0:
            return
        if reorthogonalize and i > 1:
            s = _g_orthogonalize(r, P[:, : i - 1], GP[:, : i - 1])
        Gs = A @ s
        curv = s @ Gs
        if not curv > 0:
            raise Breakdown(f"s^T G s = {curv:.3e} at iteration {i}")
        alpha = (s @ r) / curv
        v = v + alpha * s
        r = r - alpha * Gs
        if i <= P.shape[1]:
            root = np.sqrt(curv)
            P[:, i - 1] = s / root
            GP[:, i - 1] = Gs / root
        Vs = V @ s
        acc += np.outer(Vs, Vs) / curv
        yield i, ProjectedBelief(V @ v, acc, i), s, curv
        rr_new = r @ r
        if not reorthogonalize:
            s = r + (rr_new / rr) * s
        rr = rr_new


def cagp_pls_cg(G, b, V, m, reorthogonalize=True):
    """BayesCG projected through ``V``.

    Search directions are the conjugate-gradient directions from a zero
    initial guess; ``G``-conjugacy makes ``S^T G S`` diagonal so the
    downdate is ``sum_i (V s_i)(V s_i)^T / (s_i^T G s_i)``. If the residual
    vanishes before ``m`` steps the belief reports the number of steps
    actually taken.

    Raises
    ------
    Breakdown
        If a direction has ``s^T G s <= 0``.
    """
    G = _as_gramian(G)
    b, V = _check_inputs(G, b, V)
    belief = _empty_belief(b, V)
    for _, belief, _, _ in cg_iterates(G, b, V, m, reorthogonalize):
        pass
    belief.projected_downdate = symmetrize(belief.projected_downdate)
    return belief


def cg_directions(G, b, m, reorthogonalize=True):
    """Search directions and curvatures ``s_i^T G s_i`` of ``m`` CG steps."""
    G = _as_gramian(G)
    S, curv = [], []
    for _, _, s, c in cg_iterates(G, b, np.zeros((1, G.size)), m, reorthogonalize):
        S.append(s)
        curv.append(c)
    return np.column_stack(S) if S else np.zeros((G.size, 0)), np.array(curv)


def bayes_pls_project(G, b, S, V):
    """Bayesian PLS posterior for search directions ``S`` projected through ``V``.

    ``v_bar = S (S^T G S)^{-1} S^T b`` and ``D = S (S^T G S)^{-1} S^T``. Both
    are invariant under ``S -> S R`` for invertible ``R``, so ``S`` is
    orthonormalised first to keep the inner Cholesky well conditioned.

    Raises
    ------
    NotPositiveDefinite
        If the columns of ``S`` are (numerically) linearly dependent.
    """
    G = _as_gramian(G)
    b, V = _check_inputs(G, b, V)
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.shape[0] != G.size:
        raise ShapeMismatch(f"S has {S.shape[0]} rows, Gramian is {G.size}x{G.size}")
    m = S.shape[1]
    if m == 0:
        return _empty_belief(b, V)
    Q, R = np.linalg.qr(S)
    rdiag = np.abs(np.diagonal(R))
    if rdiag.min() <= 1e-12 * rdiag.max():
        raise NotPositiveDefinite("S^T G S is singular: search directions are linearly dependent")
    C = cholesky(Q.T @ (G.matrix @ Q))
    # W = Q C^{-T}, so that D = W W^T
    W = forward_substitution(C, Q.T).T
    VW = V @ W
    v_bar = W @ (W.T @ b)
    return ProjectedBelief(V @ v_bar, symmetrize(VW @ VW.T), m)


def random_directions(d, m, seed):
    """``d x m`` IID standard-normal directions.

    Drawn row-major as ``(m, d)`` and transposed so that the first ``k``
    columns for a given seed do not depend on ``m``.
    """
    return np.random.default_rng(seed).standard_normal((m, d)).T


def cagp_pls_rand(G, b, V, m, seed):
    """Bayesian PLS with ``m`` IID Gaussian directions drawn from ``seed``.

    The directions never see ``b``.
    """
    G = _as_gramian(G)
    if m > G.size:
        raise ValueError(f"at most d={G.size} random directions, got {m}")
    return bayes_pls_project(G, b, random_directions(G.size, m, seed), V)


def psim_downdate_recursion(Mtilde, G, m):
    """Dense downdate ``D_m`` of a completely consistent PSIM.

    ``D_1 = Mt + Mt^T - Mt G Mt^T`` and
    ``D_i = D_1 + (I - Mt G) D_{i-1} (I - Mt G)^T``. Test oracle only.
    """
    Mt = np.asarray(Mtilde, dtype=float)
    G = G.matrix if isinstance(G, GramianSystem) else np.asarray(G, dtype=float)
    if Mt.shape != G.shape:
        raise ShapeMismatch(f"Mtilde {Mt.shape} and G {G.shape} differ")
    d = G.shape[0]
    D1 = Mt + Mt.T - Mt @ G @ Mt.T
    M = np.eye(d) - Mt @ G
    D = np.zeros((d, d))
    for _ in range(m):
        D = D1 + M @ D @ M.T
    return D
