import numpy as np
import pytest

from robust_vsi.config import Config
from robust_vsi.pipeline import discretize, pr_baseline, run_design
from robust_vsi.plant import PlantParams


@pytest.fixture(scope="session")
def params():
    return PlantParams()


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def design(cfg):
    return run_design(cfg)


@pytest.fixture(scope="session")
def controller(design):
    return design.controller


@pytest.fixture(scope="session")
def controller_d(design, cfg):
    return discretize(design.controller, cfg)


@pytest.fixture(scope="session")
def pr(cfg):
    return pr_baseline(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_stable(rng, n, m=1, p=1, shift=0.5):
    """Random stable realization with eigenvalues pushed left of -shift."""
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + shift) * np.eye(n)
    return A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m))


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """``record(key, ok, detail)`` stores one acceptance line for the summary."""
    def _record(key, ok, detail):
        line = f"CRITERION {key}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE[key] = line
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    def order(k):
        num = "".join(ch for ch in k if ch.isdigit())
        return (int(num), k)
    for key in sorted(_ACCEPTANCE, key=order):
        terminalreporter.write_line(_ACCEPTANCE[key])
