from abc import ABC, abstractmethod

from components.base_problem import Problem
from components.enums import AlgorithmKind
from core.mixing import Network
from core.state import AlgorithmState
from core.streams import StreamBank


class Algorithm(ABC):
    """A distributed (or centralized) stochastic gradient method bound to a problem and a network."""

    kind: AlgorithmKind

    def __init__(self, problem: Problem, network: Network):
        if problem.n != network.n:
            raise ValueError(f"problem has {problem.n} agents but the network has {network.n}")
        self.problem = problem
        self.network = network

    @property
    def tracks_gradients(self) -> bool:
        return self.kind.tracks_gradients

    @abstractmethod
    def step(self, state: AlgorithmState, alpha: float, bank: StreamBank) -> AlgorithmState:
        """
        Advance the state by one iteration.

        Parameters:
        - state: Current state, updated in place and returned
        - alpha: Stepsize for this iteration
        - bank: Random streams of the run
        """
        pass
