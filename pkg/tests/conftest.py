import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from coarea_tv.stencil import (  # noqa: E402
    binary_euclidean_potential,
    diagonal_pairs_potential,
    nearest_neighbor_potential,
)

ACCEPTANCE_LINES = []


@pytest.fixture
def nn():
    return nearest_neighbor_potential()


@pytest.fixture
def be():
    return binary_euclidean_potential()


@pytest.fixture
def dp():
    return diagonal_pairs_potential()


@pytest.fixture(params=["nearest_neighbor", "binary_euclidean", "diagonal_pairs"])
def bundled(request):
    return {
        "nearest_neighbor": nearest_neighbor_potential,
        "binary_euclidean": binary_euclidean_potential,
        "diagonal_pairs": diagonal_pairs_potential,
    }[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
