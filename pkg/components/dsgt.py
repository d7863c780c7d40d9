import numpy as np

from components.base_algorithm import Algorithm
from components.base_problem import Problem
from components.enums import AlgorithmKind
from core.mixing import MixingMatrix
from core.state import AlgorithmState
from core.streams import StreamBank


def dsgt_step(
    s: AlgorithmState,
    W: MixingMatrix,
    alpha: float,
    pr: Problem,
    bank: StreamBank,
    messages: int = 0,
) -> AlgorithmState:
    """One distributed stochastic gradient tracking iteration.

        x_{k+1} = W(x_k - alpha*y_k)
        y_{k+1} = W y_k + G(x_{k+1}) - G(x_k)

    G(x_k) is the cached sample G_last, never a redraw.

    Args:
        s: State, updated in place
        W: Consensus weights
        alpha: Stepsize
        pr: Problem
        bank: Random streams
        messages: Messages per iteration, 2|E|

    Returns:
        The updated state
    """
    w = W.entries
    X_next = w @ (s.X - alpha * s.Y)
    G_next = pr.sample_gradients(np.arange(s.n), X_next, bank)
    s.Y = w @ s.Y + G_next - s.G_last
    s.X = X_next
    s.G_last = G_next
    s.grad_evals += s.n
    s.messages += messages
    s.vectors_sent += 2 * messages
    return s


class DSGT(Algorithm):
    kind = AlgorithmKind.DSGT

    def __init__(self, problem, network):
        super().__init__(problem, network)
        self.messages_per_step = 2 * network.graph.num_edges

    def step(self, state, alpha, bank):
        return dsgt_step(state, self.network.weights, alpha, self.problem, bank, self.messages_per_step)
