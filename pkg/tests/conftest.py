import numpy as np
import pytest

from nnreduce.network import Activation, Layer, Network, random_network
from nnreduce.sets import IntervalBox

# lines collected by test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_pair(rng, max_depth=4, max_width=6, max_in=4, max_out=3, mixed=False):
    """Random (big, small) pair with shared input/output sizes and small.depth <= big.depth."""
    n_in = int(rng.integers(1, max_in + 1))
    n_out = int(rng.integers(1, max_out + 1))
    depth = int(rng.integers(1, max_depth + 1))
    small_depth = int(rng.integers(1, depth + 1))

    def make(d):
        widths = [n_in] + [int(rng.integers(1, max_width + 1)) for _ in range(d - 1)] + [n_out]
        out_act = Activation.RELU if rng.random() < 0.3 else Activation.LINEAR
        net = random_network(widths, rng, output_activation=out_act)
        if not mixed:
            return net
        layers = []
        for layer in net.layers:
            kinds = tuple(Activation.RELU if rng.random() < 0.7 else Activation.LINEAR
                          for _ in range(layer.out_dim))
            layers.append(Layer(layer.weights, layer.bias, kinds))
        return Network(layers, n_in)

    return make(depth), make(small_depth)


def random_box(rng, dim, spread=2.0):
    c = rng.uniform(-spread, spread, dim)
    r = rng.uniform(0.0, spread, dim)
    return IntervalBox(c - r, c + r)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def acc_nets():
    from nnreduce.acc import synthesize_controllers
    return synthesize_controllers(0)


@pytest.fixture(scope="session")
def acc_sound(acc_nets):
    """Default benchmark with the reduced controller and its computed precision."""
    from nnreduce.acc import acc_scenario
    big, small = acc_nets
    return acc_scenario(controller=big, reduced=small)
