import math

import numpy as np
import pytest
from hypothesis import settings

from byzsprt.models import GaussianPair, bernoulli_pair

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

LN4 = math.log(4.0)


@pytest.fixture
def gauss():
    return GaussianPair()


@pytest.fixture
def bern():
    return bernoulli_pair(0.2, 0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
