import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from components.enums import ProblemKind
from core.errors import ConsistencyError, PreconditionError
from core.streams import Channel, StreamBank, generator

logger = logging.getLogger(__name__)

OPTIMUM_RESIDUAL_TOL = 1e-10
MIN_SIGMA_SAMPLES = 1000


@dataclass(frozen=True)
class GradientSample:
    """One stochastic gradient g_i(x, xi).

    `draw` is the index of the sample within the agent's stream, so
    (seed, replica, agent, draw) locates it exactly.
    """

    value: np.ndarray
    agent: int
    seed: int
    replica: int
    draw: int


@dataclass(frozen=True)
class Sigma2Estimate:
    value: float
    stderr: float
    per_agent: np.ndarray
    radius: float
    samples: int


class Problem(ABC):
    """n local objectives f_i on R^p with a stochastic first-order oracle.

    Subclasses provide the row-wise gradient kernels; everything else is
    shared.
    """

    def __init__(self, n: int, p: int, kind: ProblemKind):
        if n < 1 or p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
        self.n = n
        self.p = p
        self.kind = kind

    @abstractmethod
    def _exact_rows(self, agents: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Exact gradients of f_agents[r] at X[r], one row each."""
        pass

    @abstractmethod
    def _sample_rows(self, agents: np.ndarray, X: np.ndarray, bank: StreamBank) -> np.ndarray:
        """Stochastic gradients at X[r] for distinct agents, one row each."""
        pass

    @abstractmethod
    def _solve_optimum(self) -> np.ndarray:
        pass

    @abstractmethod
    def convexity_constants(self) -> tuple[float, float]:
        """(mu, L) such that every f_i is mu-strongly convex with L-Lipschitz gradient."""
        pass

    @property
    def sigma2(self) -> float | None:
        """Exact noise variance bound when known by construction, else None."""
        return None

    def exact_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return self._exact_rows(np.array([i]), np.atleast_2d(x))[0]

    def exact_gradients(self, X: np.ndarray) -> np.ndarray:
        """Stacked exact gradients, row i at X[i]."""
        return self._exact_rows(np.arange(self.n), X)

    def exact_mean_gradient(self, X: np.ndarray) -> np.ndarray:
        """h(X) = (1/n) 1^T grad F(X)."""
        if X.shape != (self.n, self.p):
            raise ValueError(f"expected iterates of shape {(self.n, self.p)}, got {X.shape}")
        return self.exact_gradients(X).mean(axis=0)

    def sample_gradients(self, agents: np.ndarray, X: np.ndarray, bank: StreamBank) -> np.ndarray:
        return self._sample_rows(agents, X, bank)

    def sample_gradient(self, i: int, x: np.ndarray, bank: StreamBank) -> GradientSample:
        draw = bank.draws(i)
        value = self._sample_rows(np.array([i]), np.atleast_2d(x), bank)[0]
        return GradientSample(value, i, bank.seed, bank.replica, draw)

    def optimum(self) -> np.ndarray:
        return self._optimum.copy()

    @cached_property
    def _optimum(self) -> np.ndarray:
        try:
            x_star = self._solve_optimum()
        except linalg.LinAlgError as exc:
            raise ConsistencyError(f"optimality system is singular: {exc}") from exc
        residual = np.linalg.norm(self.exact_mean_gradient(np.tile(x_star, (self.n, 1))))
        if residual > OPTIMUM_RESIDUAL_TOL:
            raise ConsistencyError(f"optimum residual {residual:.3e} exceeds {OPTIMUM_RESIDUAL_TOL}")
        return x_star


def estimate_sigma2(
    pr: Problem,
    center: np.ndarray,
    radius: float,
    samples: int,
    seed: int,
) -> Sigma2Estimate:
    """Empirical bound on E||g_i(x, xi) - grad f_i(x)||^2 over a ball around center.

    Points are drawn uniformly from the ball, one per sample and shared by all
    agents. The estimate is the largest per-agent mean.

    Args:
        pr: Problem to probe
        center: Ball center, usually x*
        radius: Ball radius, 0 probes the center only
        samples: Draws per agent, at least 1000
        seed: Seed for both the points and the oracle streams

    Returns:
        The per-agent maximum with its standard error
    """
    if samples < MIN_SIGMA_SAMPLES:
        raise PreconditionError(f"need at least {MIN_SIGMA_SAMPLES} samples, got {samples}")
    if radius < 0:
        raise PreconditionError("radius must be nonnegative")

    rng = generator(seed, Channel.SIGMA_POINTS)
    direction = rng.standard_normal((samples, pr.p))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    scale = radius * rng.random(samples) ** (1.0 / pr.p)
    points = center + direction * scale[:, None]

    bank = StreamBank(seed, 0, pr.n)
    agents = np.arange(pr.n)
    sq = np.empty((samples, pr.n))
    for s in range(samples):
        X = np.tile(points[s], (pr.n, 1))
        noise = pr.sample_gradients(agents, X, bank) - pr.exact_gradients(X)
        sq[s] = np.einsum("ij,ij->i", noise, noise)

    per_agent = sq.mean(axis=0)
    worst = int(np.argmax(per_agent))
    stderr = float(sq[:, worst].std(ddof=1) / np.sqrt(samples))
    logger.info("sigma^2 estimate %.6g (se %.3g) over radius %g with %d samples", per_agent[worst], stderr, radius, samples)
    return Sigma2Estimate(float(per_agent[worst]), stderr, per_agent, radius, samples)
