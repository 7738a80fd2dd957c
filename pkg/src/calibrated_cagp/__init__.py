"""Computation-aware Gaussian-process regression with calibrated
probabilistic linear solvers."""

from .cagp import CAGPPosterior, GPPrior, cagp_posterior, exact_gp_posterior
from .kernels import GramianSystem, KernelSpec, gramian, kernel_eval, kernel_matrix
from .pls import (
    ProjectedBelief,
    SolverChoice,
    bayes_pls_project,
    cagp_pls_cg,
    cagp_pls_gs,
    cagp_pls_rand,
    gauss_seidel_sweep,
    psim_downdate_recursion,
)

__version__ = "0.1.0"
