import pytest

from relu_forge.passes import optimize
from relu_forge.synth import build_max5, build_ternary_max


@pytest.fixture(scope="session")
def max5():
    return build_max5()


@pytest.fixture(scope="session")
def max11():
    return build_ternary_max(11)


@pytest.fixture(scope="session")
def max11_opt(max11):
    return optimize(max11)


@pytest.fixture(scope="session")
def ternary_nets(max11):
    """Ternary MAX_n for every n under the default term guard."""
    nets = {n: build_ternary_max(n) for n in range(1, 11)}
    nets[11] = max11
    return nets
