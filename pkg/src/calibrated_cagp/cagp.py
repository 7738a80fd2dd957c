"""Computation-aware GP posteriors and the exact dense reference."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .kernels import GramianSystem, KernelSpec, as_points, gramian, kernel_matrix
from .linalg import back_substitution, cholesky, forward_substitution, symmetrize
from .pls import SolverChoice, cagp_pls_cg, cagp_pls_gs, cagp_pls_rand

MEAN_KINDS = ("zero", "constant", "data_average")


@dataclass(frozen=True)
class GPPrior:
    """GP prior with a constant mean and Gaussian observation noise.

    ``mean`` is ``"zero"``, ``"constant"`` (uses ``mean_value``) or
    ``"data_average"`` (the average of the training targets).
    """

    kernel: KernelSpec = field(default_factory=KernelSpec)
    noise_variance: float = 0.01
    mean: str = "zero"
    mean_value: float = 0.0

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")
        if self.mean not in MEAN_KINDS:
            raise ValueError(f"unknown prior mean {self.mean!r}; expected one of {MEAN_KINDS}")

    def mean_constant(self, y=None):
        if self.mean == "zero":
            return 0.0
        if self.mean == "constant":
            return float(self.mean_value)
        if y is None:
            raise ValueError("data_average prior mean needs training targets")
        return np.mean(y, axis=0)

    def with_kernel(self, kernel):
        return GPPrior(kernel, self.noise_variance, self.mean, self.mean_value)


@dataclass
class CAGPPosterior:
    """Posterior mean and covariance at the test points."""

    mean: np.ndarray
    covariance: np.ndarray
    iterations: int
    solver: SolverChoice

    @property
    def variance(self):
        return np.diagonal(self.covariance).copy()


def _prepare(prior, X, y, Xt):
    X = as_points(X)
    Xt = as_points(Xt)
    y = np.asarray(y, dtype=float)
    if len(X) == 0:
        raise ShapeMismatch("need at least one training point")
    if y.shape[0] != len(X):
        raise ShapeMismatch(f"{y.shape[0]} targets for {len(X)} training points")
    if Xt.shape[1] != X.shape[1]:
        raise ShapeMismatch(f"test dimension {Xt.shape[1]} != training dimension {X.shape[1]}")
    return X, y, Xt


def cagp_posterior(prior, X, y, Xt, solver, G=None):
    """Computation-aware GP posterior at ``Xt``.

    Builds ``b = y - m0(X)`` and ``V = k(Xt, X)``, runs the chosen projected
    solver, then returns ``m0(Xt) + v_tilde`` and ``k(Xt, Xt) - D_tilde``.

    ``y`` may hold several target vectors as columns when the solver is
    linear in the data (Gauss-Seidel, random directions, exact); the mean
    then has one column per target vector. A precomputed Gramian for ``X``
    can be passed as ``G`` to avoid rebuilding it.
    """
    X, y, Xt = _prepare(prior, X, y, Xt)
    if solver.kind == "exact":
        return exact_gp_posterior(prior, X, y, Xt, G=G)
    m0 = prior.mean_constant(y)
    b = y - m0
    V = kernel_matrix(prior.kernel, Xt, X)
    prior_cov = kernel_matrix(prior.kernel, Xt)
    m = solver.iterations
    if m == 0:
        return CAGPPosterior(np.full(Xt.shape[:1] + y.shape[1:], m0), prior_cov, 0, solver)
    if G is None:
        G = gramian(prior.kernel, X, prior.noise_variance)
    if solver.kind == "gauss_seidel":
        belief = cagp_pls_gs(G, b, V, m)
    elif solver.kind == "conjugate_gradient":
        if m > G.size:
            raise ValueError(f"CG needs m <= d={G.size}, got {m}")
        belief = cagp_pls_cg(G, b, V, m)
    else:
        belief = cagp_pls_rand(G, b, V, m, solver.seed)
    cov = symmetrize(prior_cov - belief.projected_downdate)
    return CAGPPosterior(m0 + belief.projected_mean, cov, belief.iterations, solver)


def exact_gp_posterior(prior, X, y, Xt, G=None):
    """Dense Cholesky GP posterior; the reference every solver converges to."""
    X, y, Xt = _prepare(prior, X, y, Xt)
    m0 = prior.mean_constant(y)
    if G is None:
        G = gramian(prior.kernel, X, prior.noise_variance)
    Gm = G.matrix if isinstance(G, GramianSystem) else np.asarray(G, dtype=float)
    C = cholesky(Gm)
    V = kernel_matrix(prior.kernel, Xt, X)
    v_star = back_substitution(C.T, forward_substitution(C, y - m0))
    A = forward_substitution(C, V.T)
    cov = symmetrize(kernel_matrix(prior.kernel, Xt) - A.T @ A)
    return CAGPPosterior(m0 + V @ v_star, cov, len(X), SolverChoice("exact"))
