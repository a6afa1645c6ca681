import numpy as np
import pytest

from ddrp.ortho import TrainingSet


def random_injective(rng, h=20, k=12):
    """Random h x k matrix with singular values bounded away from zero."""
    W, _ = np.linalg.qr(rng.standard_normal((h, k)))
    V, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return W @ np.diag(rng.uniform(0.5, 2.0, size=k)) @ V.T


def diag_instance():
    """T = diag(2^-i) on R^8, standard basis inputs, u with 1/i^2 coefficients."""
    T = np.diag(2.0 ** -np.arange(8))
    U = np.eye(8)
    u = 1.0 / np.arange(1, 9) ** 2
    return TrainingSet(U, T @ U), u, T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy():
    """T = diag(2, 1) with inputs (1,0), (1,1)."""
    U = np.array([[1.0, 1.0], [0.0, 1.0]])
    return TrainingSet(U, np.diag([2.0, 1.0]) @ U)


ACCEPTANCE = []


def record_criterion(number, passed, detail):
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
