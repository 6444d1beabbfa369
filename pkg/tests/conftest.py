"""Shared fixtures.

The heavy objects (assembled systems, the singular baseline solution) are
session scoped: every module reuses the same instances, which keeps the
suite fast and makes cross-module comparisons exact.
"""

import sys

import numpy as np
import pytest

from fraclab import (
    ProblemParams,
    assemble,
    build_grid,
    solve_pure_singular,
)


@pytest.fixture(scope="session")
def params_s04q2():
    return ProblemParams(s=0.4, q=2.0, lam=0.0)


@pytest.fixture(scope="session")
def grid64():
    return build_grid(-1.0, 1.0, 64)


@pytest.fixture(scope="session")
def system64(grid64):
    return assemble(grid64, 0.4)


@pytest.fixture(scope="session")
def grid128():
    return build_grid(-1.0, 1.0, 128)


@pytest.fixture(scope="session")
def system128(grid128):
    return assemble(grid128, 0.4)


@pytest.fixture(scope="session")
def w128(system128, params_s04q2):
    u, report = solve_pure_singular(system128, params_s04q2)
    assert report.converged
    return u


@pytest.fixture(scope="session")
def grid256():
    return build_grid(-1.0, 1.0, 256)


@pytest.fixture(scope="session")
def system256(grid256):
    return assemble(grid256, 0.4)


@pytest.fixture(scope="session")
def w256(system256, params_s04q2):
    u, report = solve_pure_singular(system256, params_s04q2)
    assert report.converged
    return u


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
