import os

import numpy as np
import pytest

from koopflow import _pykernels

try:
    from koopflow import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
BACKENDS.append(
    pytest.param(_ckernels, id="cython", marks=pytest.mark.skipif(_ckernels is None, reason="extension not built"))
)

DATASET_DIR = os.environ.get("KOOPFLOW_DATASET")


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def linear_data(A, x0, steps):
    """Columns x0, A x0, ..., A^(steps-1) x0."""
    X = np.empty((len(x0), steps))
    X[:, 0] = x0
    for k in range(1, steps):
        X[:, k] = A @ X[:, k - 1]
    return X


# one line per acceptance criterion, repeated at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
