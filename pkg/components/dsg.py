import numpy as np

from components.base_algorithm import Algorithm
from components.base_problem import Problem
from components.enums import AlgorithmKind
from core.mixing import MixingMatrix
from core.state import AlgorithmState
from core.streams import StreamBank


def dsg_step(
    s: AlgorithmState,
    W: MixingMatrix,
    alpha: float,
    pr: Problem,
    bank: StreamBank,
    messages: int = 0,
) -> AlgorithmState:
    """Distributed stochastic gradient descent: x_{k+1} = W x_k - alpha*G(x_k).

    The sample is drawn at the current iterate; there is no tracker.
    """
    G = pr.sample_gradients(np.arange(s.n), s.X, bank)
    s.X = W.entries @ s.X - alpha * G
    s.G_last = G
    s.grad_evals += s.n
    s.messages += messages
    s.vectors_sent += messages
    return s


class DSG(Algorithm):
    kind = AlgorithmKind.DSG

    def __init__(self, problem, network):
        super().__init__(problem, network)
        # x travels both ways over every edge
        self.messages_per_step = 2 * network.graph.num_edges

    def step(self, state, alpha, bank):
        return dsg_step(state, self.network.weights, alpha, self.problem, bank, self.messages_per_step)
