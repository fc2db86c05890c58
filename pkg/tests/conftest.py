import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def noiseless_small():
    from ssvepnet.synthgen import GenConfig, gen_dataset

    return gen_dataset(GenConfig(preset="noiseless", n_subjects=2, trials_per_class=10))


@pytest.fixture(scope="session")
def high_small():
    from ssvepnet.synthgen import GenConfig, gen_dataset

    return gen_dataset(GenConfig(preset="high", n_subjects=2, trials_per_class=20))


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
