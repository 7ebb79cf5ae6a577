import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from r2se import tensor_nn as nn  # noqa: E402
from r2se.world import generate_corpus  # noqa: E402


@pytest.fixture(scope="session")
def corpus():
    """A small generated corpus shared across module tests."""
    return generate_corpus(60, seed=5)


@pytest.fixture
def small_net():
    return nn.init_network(6, 8, 5, 3, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
