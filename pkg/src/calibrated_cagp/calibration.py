"""Simulation-based calibration, KS uniformity testing and held-out z-scores."""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import erfc

from .cagp import GPPrior, cagp_posterior
from .errors import NumericalFloor, OutOfRange, ShapeMismatch
from .kernels import KernelSpec, as_points, gramian, kernel_matrix
from .linalg import cholesky
from .pls import SolverChoice, cg_iterates

N_BINS = 20
VARIANCE_FLOOR = 1e-14
SD_FLOOR = 1e-7


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function."""
    out = 0.5 * erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def kolmogorov_sf(lam, tol=1e-12):
    """Survival function of the asymptotic Kolmogorov distribution.

    ``P(K > lam)`` with ``K = sup |B(t)|`` for a Brownian bridge. For
    ``lam >= 1`` the alternating series ``2 sum (-1)^{k-1} exp(-2 k^2 lam^2)``
    is used; below that the theta-function form
    ``1 - sqrt(2 pi)/lam * sum exp(-(2k-1)^2 pi^2 / (8 lam^2))`` converges
    faster. Both series stop once a term drops below ``tol``.
    """
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        total, k = 0.0, 1
        c = -math.pi**2 / (8.0 * lam * lam)
        while True:
            term = math.exp(c * (2 * k - 1) ** 2)
            total += term
            if term < tol:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * total))
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < tol:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_uniform_test(samples):
    """One-sample Kolmogorov-Smirnov test against ``U(0, 1)``.

    Returns ``(statistic, p_value)``; the p-value is asymptotic, evaluated
    at ``sqrt(n) * statistic``.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("KS test needs at least one sample")
    if np.any(x < 0) or np.any(x > 1) or np.any(np.isnan(x)):
        raise OutOfRange("KS uniformity test needs samples in [0, 1]")
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - x), np.max(x - (i - 1) / n)))
    return stat, kolmogorov_sf(math.sqrt(n) * stat)


def histogram_counts(t_values, bins=N_BINS):
    counts, _ = np.histogram(t_values, bins=bins, range=(0.0, 1.0))
    return counts


@dataclass
class SBCReport:
    t_values: np.ndarray
    ks_statistic: float
    p_value: float
    histogram_counts: np.ndarray
    seed: int
    test_vector_seed: int
    config: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        out["t_values"] = [float(t) for t in self.t_values]
        out["histogram_counts"] = [int(c) for c in self.histogram_counts]
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def test_vector(d_test, seed):
    """Random unit vector: standard normal draw from ``seed``, normalised."""
    w = np.random.default_rng(seed).standard_normal(d_test)
    return w / np.linalg.norm(w)


def simulation_draws(n_joint, n_train, n_sim, master_seed):
    """Standard-normal draws for ``n_sim`` simulations.

    Simulation ``i`` uses the ``i``-th child of ``SeedSequence(master_seed)``
    and draws the joint prior innovations first, then the observation noise.
    Returns ``(Z, E)`` with shapes ``(n_joint, n_sim)`` and
    ``(n_train, n_sim)``.
    """
    children = np.random.SeedSequence(master_seed).spawn(n_sim)
    Z = np.empty((n_joint, n_sim))
    E = np.empty((n_train, n_sim))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        Z[:, i] = rng.standard_normal(n_joint)
        E[:, i] = rng.standard_normal(n_train)
    return Z, E


def sbc_run(prior, X, Xt, solver, n_sim, master_seed, test_vector_seed=None, threads=1):
    """Simulation-based calibration of a CAGP solver on a fixed design.

    ``X`` and ``Xt`` stay fixed; each simulation redraws the latent function
    jointly at ``X`` and ``Xt`` from the prior plus the observation noise,
    conditions on the noisy targets and scores the projection of the error
    onto one random unit vector ``w``.

    Solvers whose mean is linear in the data and whose covariance ignores
    it (Gauss-Seidel, random directions, exact) are evaluated for all
    simulations in one batched call. Conjugate gradients are run per
    simulation, optionally on ``threads`` workers.
    """
    if n_sim < 1:
        raise ValueError(f"n_sim must be at least 1, got {n_sim}")
    X = as_points(X)
    Xt = as_points(Xt)
    if test_vector_seed is None:
        test_vector_seed = master_seed
    d, d_test = len(X), len(Xt)
    m0 = prior.mean_constant(np.zeros(1))

    joint = np.vstack([X, Xt])
    C = cholesky(kernel_matrix(prior.kernel, joint))
    Z, E = simulation_draws(d + d_test, d, n_sim, master_seed)
    F = m0 + C @ Z
    Y = F[:d] + math.sqrt(prior.noise_variance) * E
    truth = F[d:]
    w = test_vector(d_test, test_vector_seed)
    G = gramian(prior.kernel, X, prior.noise_variance)

    if solver.kind == "conjugate_gradient":
        V = kernel_matrix(prior.kernel, Xt, X)
        Vw = V.T @ w
        prior_var = float(w @ kernel_matrix(prior.kernel, Xt) @ w)

        def one(i):
            # only w^T k w is needed, so V is replaced by the single row w^T V
            m_post = prior.mean_constant(Y[:, i])
            mean_w, down = 0.0, 0.0
            for _, belief, _, _ in cg_iterates(G, Y[:, i] - m_post, Vw[None, :], solver.iterations):
                mean_w = float(belief.projected_mean[0])
                down = float(belief.projected_downdate[0, 0])
            var = prior_var - down
            if var < VARIANCE_FLOOR:
                raise NumericalFloor(f"w^T k w = {var:.3e} is below {VARIANCE_FLOOR:g}")
            error = m_post * w.sum() + mean_w - w @ truth[:, i]
            return std_normal_cdf(error / math.sqrt(var))

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                t = np.array(list(pool.map(one, range(n_sim))))
        else:
            t = np.array([one(i) for i in range(n_sim)])
    else:
        post = cagp_posterior(prior, X, Y, Xt, solver, G=G)
        var = float(w @ post.covariance @ w)
        if var < VARIANCE_FLOOR:
            raise NumericalFloor(f"w^T k w = {var:.3e} is below {VARIANCE_FLOOR:g}")
        mean = post.mean.reshape(d_test, n_sim)
        t = std_normal_cdf(w @ (mean - truth) / math.sqrt(var))
        t = np.atleast_1d(t)

    stat, p = ks_uniform_test(t)
    config = {
        "solver": solver.kind,
        "iterations": solver.iterations,
        "solver_seed": solver.seed,
        "n_sim": n_sim,
        "n_train": d,
        "n_test": d_test,
        "kernel": prior.kernel.family,
        "lengthscale": prior.kernel.lengthscale,
        "amplitude": prior.kernel.amplitude,
        "noise_variance": prior.noise_variance,
    }
    return SBCReport(t, stat, p, histogram_counts(t), master_seed, test_vector_seed, config)


def heldout_zscores(posterior, truth):
    """Per-point ``Phi((mean - truth) / sd)`` with ``sd`` floored at 1e-7."""
    truth = np.asarray(truth, dtype=float)
    mean = np.asarray(posterior.mean, dtype=float)
    if truth.shape != mean.shape:
        raise ShapeMismatch(f"truth has shape {truth.shape}, posterior mean {mean.shape}")
    sd = np.sqrt(np.maximum(np.diagonal(posterior.covariance), 0.0))
    sd = np.maximum(sd, SD_FLOOR)
    return np.atleast_1d(std_normal_cdf((mean - truth) / sd))


def synthetic_sbc(
    solver,
    seed=0,
    lengthscale=0.2,
    smoothness="matern_three_half",
    n_sim=1000,
    n_train=400,
    grid_size=21,
    noise_std=0.1,
    threads=1,
):
    """SBC on the unit-square synthetic design with every seed derived from ``seed``.

    The training inputs, the simulation master seed, the test vector and
    the random-direction seed come from independent children of
    ``SeedSequence(seed)``. ``solver.seed`` is replaced by the derived one.
    """
    from .experiments import unit_grid

    design, master, wseed, sseed = (
        int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(4)
    )
    X = np.random.default_rng(design).uniform(size=(n_train, 2))
    Xt = unit_grid(grid_size)
    prior = GPPrior(KernelSpec(smoothness, lengthscale, 1.0), noise_std**2)
    solver = SolverChoice(solver.kind, solver.iterations, sseed)
    report = sbc_run(prior, X, Xt, solver, n_sim, master, wseed, threads=threads)
    report.config.update({"seed": seed, "design_seed": design, "grid_size": grid_size})
    return report
