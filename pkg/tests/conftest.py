from pathlib import Path

import numpy as np
import pytest

from calibrated_cagp.kernels import KernelSpec, gramian

FIXTURES = Path(__file__).parent / "fixtures"


def random_spd(d, rng, cond_floor=0.1):
    """Well-conditioned dense SPD matrix."""
    A = rng.standard_normal((d, d))
    return A @ A.T / d + cond_floor * np.eye(d)


def kernel_gramian(d, rng, noise_variance=0.01, lengthscale=0.2, family="matern_three_half"):
    X = rng.uniform(size=(d, 2))
    return X, gramian(KernelSpec(family, lengthscale, 1.0), X, noise_variance)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def worked_system():
    """The 2x2 system G = [[2, 1], [1, 2]], b = [1, 1] used throughout."""
    return np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([1.0, 1.0])


ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail):
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
