import numpy as np

from components.base_algorithm import Algorithm
from components.base_problem import Problem
from components.enums import AlgorithmKind
from core.streams import StreamBank


def csg_step(x: np.ndarray, alpha: float, pr: Problem, bank: StreamBank) -> tuple[np.ndarray, np.ndarray]:
    """x_{k+1} = x_k - alpha*(1/n) sum_i g_i(x_k, xi_i).

    Returns:
        The new point and the n samples taken at x_k
    """
    G = pr.sample_gradients(np.arange(pr.n), np.tile(x, (pr.n, 1)), bank)
    return x - alpha * G.mean(axis=0), G


class CSG(Algorithm):
    """Centralized baseline. Every agent row of the state holds the same point."""

    kind = AlgorithmKind.CSG

    def step(self, state, alpha, bank):
        x_next, G = csg_step(state.X[0], alpha, self.problem, bank)
        state.X = np.tile(x_next, (state.n, 1))
        state.G_last = G
        state.grad_evals += state.n
        return state
