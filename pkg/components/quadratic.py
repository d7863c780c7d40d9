import numpy as np
from scipy import linalg
from scipy.stats import ortho_group

from components.base_problem import Problem
from components.enums import ProblemKind
from core.streams import Channel, StreamBank, generator


class QuadraticProblem(Problem):
    """f_i(x) = (1/2)(x - c_i)^T H_i (x - c_i) with additive isotropic Gaussian gradient noise.

    The noise has total variance sigma^2, so the variance bound holds with
    equality everywhere.
    """

    def __init__(self, curvatures: np.ndarray, offsets: np.ndarray, sigma: float):
        curvatures = np.asarray(curvatures, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        super().__init__(offsets.shape[0], offsets.shape[1], ProblemKind.QUADRATIC)
        if curvatures.shape != (self.n, self.p, self.p):
            raise ValueError(f"curvatures must have shape {(self.n, self.p, self.p)}, got {curvatures.shape}")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.curvatures = curvatures
        self.offsets = offsets
        self.sigma = float(sigma)

    @property
    def sigma2(self) -> float:
        return self.sigma**2

    def _exact_rows(self, agents, X):
        return np.einsum("ipq,iq->ip", self.curvatures[agents], X - self.offsets[agents])

    def _sample_rows(self, agents, X, bank: StreamBank):
        grads = self._exact_rows(agents, X)
        if self.sigma > 0:
            # one normal row of width p per sample
            grads = grads + (self.sigma / np.sqrt(self.p)) * bank.normal(agents, self.p)
        return grads

    def _solve_optimum(self):
        lhs = self.curvatures.sum(axis=0)
        rhs = np.einsum("ipq,iq->p", self.curvatures, self.offsets)
        return linalg.solve(lhs, rhs, assume_a="pos")

    def convexity_constants(self):
        eigs = np.array([linalg.eigvalsh(h) for h in self.curvatures])
        return float(eigs.min()), float(eigs.max())


def make_quadratic_problem(
    n: int,
    p: int,
    mu: float,
    L: float,
    sigma: float,
    spread: float = 1.0,
    seed: int = 0,
    offsets: np.ndarray | None = None,
) -> QuadraticProblem:
    """Quadratic test problem with controlled constants.

    Each H_i = Q_i diag(linspace(mu, L, p)) Q_i^T with a random orthogonal Q_i,
    so mu and L are attained exactly. With p = 1 the curvatures are spread
    over the agents instead. mu == L gives H_i = mu*I exactly.

    Args:
        n: Number of agents
        p: Dimension
        mu: Smallest curvature
        L: Largest curvature
        sigma: Gradient noise level
        spread: Offsets c_i are uniform on [-spread, spread]^p
        seed: Seed for the random frames and offsets
        offsets: Explicit offsets, overrides spread
    """
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    rng = generator(seed, Channel.PROBLEM)

    if mu == L:
        curvatures = np.tile(mu * np.eye(p), (n, 1, 1))
    elif p == 1:
        curvatures = np.linspace(mu, L, n).reshape(n, 1, 1) if n > 1 else np.full((1, 1, 1), mu)
    else:
        spectrum = np.linspace(mu, L, p)
        frames = ortho_group.rvs(dim=p, size=n, random_state=rng).reshape(n, p, p)
        curvatures = np.einsum("ipk,k,iqk->ipq", frames, spectrum, frames)
        curvatures = (curvatures + curvatures.transpose(0, 2, 1)) / 2.0

    if offsets is None:
        offsets = rng.uniform(-spread, spread, size=(n, p))
    return QuadraticProblem(curvatures, offsets, sigma)
