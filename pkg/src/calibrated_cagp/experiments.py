"""Synthetic problems, dataset ingestion, metrics and hyperparameter search."""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cagp import CAGPPosterior, GPPrior, exact_gp_posterior
from .errors import (
    AllCandidatesFailed,
    DuplicateRows,
    MissingColumn,
    ParseError,
    ShapeMismatch,
)
from .kernels import KernelSpec, as_points, gramian, kernel_matrix
from .linalg import cholesky, forward_substitution
from .pls import SolverChoice, bayes_pls_project, cg_iterates, gs_iterates, random_directions

logger = logging.getLogger(__name__)

NOISE_STD = 0.1
N_TRAIN = 400
GRID_SIZE = 21


@dataclass
class RegressionProblem:
    """Training data, test inputs and (optionally) test targets.

    ``provenance`` records how the problem was made: ``{"kind": "synthetic",
    "seed": ..., ...}`` or ``{"kind": "csv", "path": ...}``.
    ``noisy_truth`` marks test targets that include observation noise (held
    out data), as opposed to noiseless latent values.
    """

    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_truth: np.ndarray | None
    prior: GPPrior
    provenance: dict = field(default_factory=dict)
    noisy_truth: bool = False

    def __post_init__(self):
        if len(self.train_y) != len(self.train_X):
            raise ShapeMismatch(f"{len(self.train_y)} targets for {len(self.train_X)} inputs")


@dataclass
class MetricSeries:
    """Repeat-averaged RMSE and NLL per iteration count for one solver.

    ``rmse_runs`` and ``nll_runs`` keep the per-repeat values, one row per
    repeat.
    """

    solver: str
    iteration_counts: np.ndarray
    rmse: np.ndarray
    nll: np.ndarray
    rmse_runs: np.ndarray | None = None
    nll_runs: np.ndarray | None = None

    def rows(self):
        for m, r, n in zip(self.iteration_counts, self.rmse, self.nll):
            yield self.solver, int(m), float(r), float(n)


def sample_gp_prior(kernel, X, seed):
    """Draw ``f(X)`` from a zero-mean GP prior: ``cholesky(K) @ z``."""
    X = as_points(X)
    C = cholesky(kernel_matrix(kernel, X))
    z = np.random.default_rng(seed).standard_normal(len(X))
    return C @ z


def unit_grid(n):
    """``n x n`` regular grid on ``[0, 1]^2``, row-major in the first axis."""
    g = np.linspace(0.0, 1.0, n)
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def synthetic_problem(
    lengthscale,
    smoothness="matern_three_half",
    seed=0,
    n_train=N_TRAIN,
    grid_size=GRID_SIZE,
    noise_std=NOISE_STD,
):
    """In-model problem on ``[0, 1]^2``.

    ``n_train`` uniform training inputs, a ``grid_size x grid_size`` test
    grid, truth drawn jointly at train and test inputs from the zero-mean
    Matérn prior with unit amplitude, and Gaussian noise of standard
    deviation ``noise_std`` on the training targets.
    """
    kernel = KernelSpec(smoothness, float(lengthscale), 1.0)
    prior = GPPrior(kernel, noise_std**2)
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n_train, 2))
    Xt = unit_grid(grid_size)
    f = sample_gp_prior(kernel, np.vstack([X, Xt]), rng)
    y = f[:n_train] + noise_std * rng.standard_normal(n_train)
    provenance = {
        "kind": "synthetic",
        "seed": seed if isinstance(seed, int) else None,
        "lengthscale": float(lengthscale),
        "smoothness": smoothness,
        "n_train": n_train,
        "grid_size": grid_size,
        "noise_std": noise_std,
    }
    return RegressionProblem(X, y, Xt, f[n_train:], prior, provenance)


def rmse(prediction, truth):
    prediction = np.asarray(prediction, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if prediction.shape != truth.shape:
        raise ShapeMismatch(f"prediction {prediction.shape} vs truth {truth.shape}")
    return float(np.sqrt(np.mean((prediction - truth) ** 2)))


def _nll(mean, variance, truth):
    var = np.maximum(variance, 1e-12)
    return float(np.mean(0.5 * np.log(2 * np.pi * var) + (mean - truth) ** 2 / (2 * var)))


def nll(posterior, truth, include_noise=False, noise_variance=0.0):
    """Mean pointwise negative log predictive density.

    Each test point is scored under its own Gaussian marginal; the variance
    is ``k_ii`` plus ``noise_variance`` when ``include_noise`` is set (for
    noisy held-out targets), floored at 1e-12.
    """
    truth = np.asarray(truth, dtype=float)
    mean = np.asarray(posterior.mean, dtype=float)
    if truth.shape != mean.shape:
        raise ShapeMismatch(f"truth {truth.shape} vs posterior mean {mean.shape}")
    var = np.diagonal(posterior.covariance)
    if include_noise:
        var = var + noise_variance
    return _nll(mean, var, truth)


def load_csv_dataset(
    path,
    target_column,
    standardize=True,
    train_fraction=0.8,
    seed=0,
    prior=None,
):
    """Read a numeric CSV with a header row and split it into train/test.

    Rows are shuffled with ``seed`` before the split. With ``standardize``
    every feature and the target are shifted and scaled by training-split
    statistics. Held-out targets are noisy observations, so the problem is
    flagged ``noisy_truth``.

    Raises
    ------
    MissingColumn
        If ``target_column`` is not in the header.
    ParseError
        If a cell is not a number; the message names the row and column.
    DuplicateRows
        If two training rows coincide after standardisation.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if target_column not in header:
            raise MissingColumn(f"target column {target_column!r} not found in {path}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            values = []
            for name, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {lineno}, column {name!r}: {cell!r} is not a number"
                    ) from None
            rows.append(values)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    if len(data) < 2:
        raise ParseError(f"{path}: need at least two data rows")
    t = header.index(target_column)
    features = np.delete(data, t, axis=1)
    target = data[:, t]

    order = np.random.default_rng(seed).permutation(len(data))
    n_train = int(round(train_fraction * len(data)))
    n_train = min(max(n_train, 1), len(data))
    tr, te = order[:n_train], order[n_train:]
    X, y = features[tr], target[tr]
    Xt, yt = features[te], target[te]
    scaling = None
    if standardize:
        mu, sd = X.mean(axis=0), X.std(axis=0)
        sd[sd == 0] = 1.0
        ymu, ysd = y.mean(), y.std() or 1.0
        X, Xt = (X - mu) / sd, (Xt - mu) / sd
        y, yt = (y - ymu) / ysd, (yt - ymu) / ysd
        scaling = {"target_mean": float(ymu), "target_std": float(ysd)}
    if len(np.unique(X, axis=0)) != len(X):
        raise DuplicateRows(f"{path}: duplicate training rows")
    prior = prior or GPPrior(KernelSpec("matern_three_half", 1.0, 1.0), 0.1)
    provenance = {
        "kind": "csv",
        "path": str(path),
        "target_column": target_column,
        "train_fraction": train_fraction,
        "seed": seed,
        "standardize": standardize,
        "scaling": scaling,
        "train_rows": [int(i) for i in tr],
        "test_rows": [int(i) for i in te],
    }
    return RegressionProblem(X, y, Xt, yt if len(te) else None, prior, provenance, noisy_truth=True)


def log_marginal_likelihood(prior, X, y):
    """``-b^T G^{-1} b / 2 - log det G / 2 - d log(2 pi) / 2`` with ``b = y - m0``."""
    X = as_points(X)
    y = np.asarray(y, dtype=float)
    G = gramian(prior.kernel, X, prior.noise_variance).matrix
    C = cholesky(G)
    alpha = forward_substitution(C, y - prior.mean_constant(y))
    d = len(y)
    return float(-0.5 * alpha @ alpha - np.log(np.diagonal(C)).sum() - 0.5 * d * math.log(2 * math.pi))


def grid_search_lengthscale(prior, X, y, candidates):
    """Pick the length-scale maximising the log marginal likelihood.

    A candidate whose factorisation fails scores ``-inf``. Ties resolve to
    the first candidate. Returns ``(best_lengthscale, values)``.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("no length-scale candidates given")
    values = []
    for ell in candidates:
        try:
            values.append(log_marginal_likelihood(prior.with_kernel(prior.kernel.with_lengthscale(ell)), X, y))
        except np.linalg.LinAlgError as exc:
            logger.warning("length-scale %g failed: %s", ell, exc)
            values.append(-np.inf)
    values = np.array(values)
    if np.all(np.isneginf(values)):
        raise AllCandidatesFailed(f"every length-scale candidate failed: {candidates}")
    return candidates[int(np.argmax(values))], values


def _repeat_seeds(master_seed, repeats):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(repeats)]


def _regenerate(problem, seed):
    p = problem.provenance
    if p.get("kind") != "synthetic":
        return problem
    return synthetic_problem(
        p["lengthscale"], p["smoothness"], seed, p["n_train"], p["grid_size"], p["noise_std"]
    )


def _metrics_for_solver(kind, G, b, m0, V, prior_var, truth, m_values, seed, noise_var):
    """RMSE and NLL at each requested iteration count for one solver."""
    m_values = list(m_values)
    m_max = max(m_values) if m_values else 0
    out = {}

    def record(m, proj_mean, down_diag):
        mean = m0 + proj_mean
        out[m] = (rmse(mean, truth), _nll(mean, prior_var - down_diag + noise_var, truth))

    if kind == "exact":
        # iteration count is meaningless here; the series is flat
        C = cholesky(G.matrix)
        A = forward_substitution(C, V.T)
        proj = A.T @ forward_substitution(C, b)
        down = np.einsum("ij,ij->j", A, A)
        for m in m_values:
            record(m, proj, down)
        return [out[m] for m in m_values]
    if 0 in m_values:
        record(0, np.zeros(len(V)), np.zeros(len(V)))
    wanted = set(m for m in m_values if m > 0)
    if kind == "gauss_seidel":
        for i, belief in gs_iterates(G, b, V, m_max, downdate="diag"):
            if i in wanted:
                record(i, belief.projected_mean, belief.projected_downdate)
    elif kind == "conjugate_gradient":
        last = None
        for i, belief, _, _ in cg_iterates(G, b, V, m_max):
            last = belief
            if i in wanted:
                record(i, belief.projected_mean, np.diagonal(belief.projected_downdate))
        for m in wanted - set(out):
            # residual vanished early: the belief no longer changes
            record(m, last.projected_mean, np.diagonal(last.projected_downdate))
    elif kind == "random_directions":
        S = random_directions(G.size, m_max, seed)
        for m in sorted(wanted):
            belief = bayes_pls_project(G, b, S[:, :m], V)
            record(m, belief.projected_mean, np.diagonal(belief.projected_downdate))
    else:
        raise ValueError(f"unknown solver kind {kind!r}")
    return [out[m] for m in m_values]


def _one_repeat(problem, kinds, m_values, seed):
    prob = _regenerate(problem, seed)
    if prob.test_truth is None:
        raise ValueError("convergence sweep needs test targets")
    prior = prob.prior
    X, Xt = prob.train_X, prob.test_X
    G = gramian(prior.kernel, X, prior.noise_variance)
    V = kernel_matrix(prior.kernel, Xt, X)
    m0 = prior.mean_constant(prob.train_y)
    b = prob.train_y - m0
    prior_var = np.full(len(Xt), prior.kernel.amplitude)
    noise_var = prior.noise_variance if prob.noisy_truth else 0.0
    return [
        _metrics_for_solver(k, G, b, m0, V, prior_var, prob.test_truth, m_values, seed, noise_var)
        for k in kinds
    ]


def convergence_sweep(problem, solvers, m_values, repeats=1, master_seed=0, threads=1):
    """Repeat-averaged RMSE/NLL against iteration count for several solvers.

    Synthetic problems are regenerated for every repeat (new inputs, truth
    and noise from a seed derived from ``master_seed``); CSV problems keep
    their split and only the random-direction seeds change. ``solvers`` are
    solver kinds or :class:`SolverChoice` objects (their ``iterations`` are
    ignored). NLL uses pointwise marginals and adds the noise variance for
    noisy held-out targets.

    Returns one :class:`MetricSeries` per solver, in input order.
    """
    m_values = [int(m) for m in m_values]
    if any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise ValueError(f"m_values must be strictly increasing, got {m_values}")
    kinds = [s.kind if isinstance(s, SolverChoice) else SolverChoice(s).kind for s in solvers]
    d = len(problem.train_X)
    for k in kinds:
        if k in ("conjugate_gradient", "random_directions") and m_values and m_values[-1] > d:
            raise ValueError(f"{k} needs m <= d={d}, got {m_values[-1]}")
    seeds = _repeat_seeds(master_seed, repeats)

    def run(seed):
        return _one_repeat(problem, kinds, m_values, seed)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    series = []
    for j, k in enumerate(kinds):
        arr = np.array([[res[j][i] for i in range(len(m_values))] for res in results])
        rmse_runs, nll_runs = arr[..., 0], arr[..., 1]
        series.append(
            MetricSeries(
                SolverChoice(k).label,
                np.array(m_values),
                rmse_runs.mean(axis=0),
                nll_runs.mean(axis=0),
                rmse_runs,
                nll_runs,
            )
        )
    return series


def posterior_metrics(posterior: CAGPPosterior, problem):
    """RMSE and NLL of one posterior against a problem's test targets."""
    noise = problem.prior.noise_variance if problem.noisy_truth else 0.0
    return (
        rmse(posterior.mean, problem.test_truth),
        nll(posterior, problem.test_truth, include_noise=problem.noisy_truth, noise_variance=noise),
    )


def exact_metrics(problem):
    post = exact_gp_posterior(problem.prior, problem.train_X, problem.train_y, problem.test_X)
    return posterior_metrics(post, problem)


def timing_sweep(solvers, varied, values, d=2000, d_test=25, m=40, lengthscale=0.2, repeats=3, seed=0):
    """Wall time of the projected GS/CG solvers while one size parameter varies.

    ``varied`` is ``"m"``, ``"d"`` or ``"d_test"``. Each timing is the
    minimum over ``repeats`` runs, excluding Gramian assembly. Returns rows
    ``(solver label, varied, value, seconds)``.
    """
    import time

    from .pls import cagp_pls_cg, cagp_pls_gs

    if varied not in ("m", "d", "d_test"):
        raise ValueError(f"cannot vary {varied!r}; expected m, d or d_test")
    kinds = [SolverChoice(s).kind for s in solvers]
    funcs = {"gauss_seidel": cagp_pls_gs, "conjugate_gradient": cagp_pls_cg}
    for k in kinds:
        if k not in funcs:
            raise ValueError(f"timings support gauss_seidel and conjugate_gradient, got {k}")
    kernel = KernelSpec("matern_three_half", lengthscale, 1.0)
    rows = []
    for value in values:
        size = {"m": m, "d": d, "d_test": d_test}
        size[varied] = int(value)
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(size["d"], 2))
        Xt = rng.uniform(size=(size["d_test"], 2))
        G = gramian(kernel, X, NOISE_STD**2)
        # split views are cached on first access; keep that out of the timing
        G.lower, G.strict_upper
        V = kernel_matrix(kernel, Xt, X)
        b = rng.standard_normal(size["d"])
        for k in kinds:
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                funcs[k](G, b, V, size["m"])
                best = min(best, time.perf_counter() - t0)
            rows.append((SolverChoice(k).label, varied, int(value), best))
    return rows
