import numpy as np
from scipy import linalg

from components.base_problem import Problem
from components.enums import ProblemKind
from core.streams import StreamBank

FEATURE_LOW = 0.3
FEATURE_HIGH = 0.4
TARGET_SPAN = 10.0


def feature_moments(p: int) -> tuple[np.ndarray, np.ndarray]:
    """E[u] and E[uu^T] for u uniform on [0.3, 0.4]^p."""
    mean = (FEATURE_LOW + FEATURE_HIGH) / 2.0
    var = (FEATURE_HIGH - FEATURE_LOW) ** 2 / 12.0
    return np.full(p, mean), mean**2 * np.ones((p, p)) + var * np.eye(p)


def ridge_gradient(u: np.ndarray, eps: np.ndarray, X: np.ndarray, targets: np.ndarray, penalty: float) -> np.ndarray:
    """2(u^T x - v)u + 2*penalty*x with v = u^T x_tilde + eps, row-wise."""
    residual = np.einsum("ij,ij->i", u, X - targets) - eps
    return 2.0 * residual[:, None] * u + 2.0 * penalty * X


class RidgeProblem(Problem):
    """On-line ridge regression: f_i(x) = E[(u^T x - v_i)^2] + penalty*||x||^2.

    Agent i observes v_i = u^T x_tilde_i + eps with u ~ U[0.3, 0.4]^p and
    eps ~ N(0, 1).
    """

    def __init__(self, targets: np.ndarray, penalty: float):
        targets = np.asarray(targets, dtype=float)
        super().__init__(targets.shape[0], targets.shape[1], ProblemKind.RIDGE)
        if penalty <= 0:
            raise ValueError(f"ridge penalty must be positive, got {penalty}")
        self.targets = targets
        self.penalty = penalty
        self.feature_mean, self.feature_second_moment = feature_moments(self.p)

    def _exact_rows(self, agents, X):
        return 2.0 * (X - self.targets[agents]) @ self.feature_second_moment + 2.0 * self.penalty * X

    def _sample_rows(self, agents, X, bank: StreamBank):
        # one uniform row of width p and one normal per sample
        u = FEATURE_LOW + (FEATURE_HIGH - FEATURE_LOW) * bank.uniform(agents, self.p)
        eps = bank.normal(agents, 1)[:, 0]
        return ridge_gradient(u, eps, X, self.targets[agents], self.penalty)

    def _solve_optimum(self):
        lhs = self.feature_second_moment + self.penalty * np.eye(self.p)
        rhs = self.feature_second_moment @ self.targets.mean(axis=0)
        return linalg.solve(lhs, rhs, assume_a="pos")

    def convexity_constants(self):
        eigs = linalg.eigvalsh(self.feature_second_moment)
        return 2.0 * (eigs[0] + self.penalty), 2.0 * (eigs[-1] + self.penalty)


def ridge_targets(n: int, p: int) -> np.ndarray:
    """Agent i gets the constant vector at level 10*i/(n-1); a single agent sits at 5."""
    if n == 1:
        return np.full((1, p), TARGET_SPAN / 2.0)
    levels = TARGET_SPAN * np.arange(n) / (n - 1)
    return np.repeat(levels[:, None], p, axis=1)


def make_ridge_problem(n: int, p: int, penalty: float, targets: np.ndarray | None = None) -> RidgeProblem:
    """Build the ridge instance. The layout is deterministic; randomness lives in the sample streams."""
    if targets is None:
        targets = ridge_targets(n, p)
    return RidgeProblem(targets, penalty)
