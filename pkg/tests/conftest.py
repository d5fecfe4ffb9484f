import hypothesis
import pytest

from latseq.rng import RandomSource
from latseq.testing import random_lattice, scored_branching_lattice

hypothesis.settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.load_profile("default")


@pytest.fixture
def branching_lattice():
    return scored_branching_lattice()


@pytest.fixture
def rng():
    return RandomSource(1234)


def lattice_for_seed(seed: int, max_internal: int = 10):
    return random_lattice(RandomSource(seed), max_internal=max_internal)
