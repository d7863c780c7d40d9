import numpy as np
import pytest

from components.enums import TopologyKind, WeightRule
from components.quadratic import make_quadratic_problem
from components.ridge import make_ridge_problem
from core.graph import TopologySpec, build_graph
from core.mixing import build_network

MINIMAL_CONFIG = """\
name = tiny
problem = quad:p=3,mu=1,L=4,sigma=1
topology = ring
agents = 4
algorithms = dsgt,gsgt,dsg,csg
stepsize = constant:0.01
steps = 40
replicas = 2
seed = 5
"""


@pytest.fixture
def ring10():
    return build_network(build_graph("ring", 10), WeightRule.LAZY_METROPOLIS)


@pytest.fixture
def complete5():
    return build_network(build_graph("complete", 5), WeightRule.LAZY_METROPOLIS)


@pytest.fixture
def quad10():
    return make_quadratic_problem(10, 3, mu=1.0, L=4.0, sigma=1.0, seed=3)


@pytest.fixture
def quiet_quad10():
    return make_quadratic_problem(10, 3, mu=1.0, L=4.0, sigma=0.0, seed=3)


@pytest.fixture
def ridge10():
    return make_ridge_problem(10, 4, 0.1)


def random_er_network(rng: np.random.Generator, rule: WeightRule = WeightRule.LAZY_METROPOLIS, n_range=(3, 30)):
    """A connected Erdos-Renyi network with random size, density and seed."""
    n = int(rng.integers(*n_range))
    prob = float(rng.uniform(0.3, 0.9))
    spec = TopologySpec(TopologyKind.ERDOS_RENYI, prob=prob, seed=int(rng.integers(0, 10_000)))
    return build_network(build_graph(spec, n), rule)
