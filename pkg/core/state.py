from dataclasses import dataclass

import numpy as np

from components.base_problem import Problem
from components.enums import StepsizeKind
from core.errors import ConfigError
from core.streams import StreamBank


@dataclass
class AlgorithmState:
    """Stacked per-agent variables of a run.

    Rows of X are the iterates x_i, rows of Y the trackers y_i, rows of
    G_last the gradient samples taken at the current iterates. Y is None for
    algorithms without a tracker.
    """

    X: np.ndarray
    Y: np.ndarray | None
    G_last: np.ndarray
    k: int = 0
    grad_evals: int = 0
    messages: int = 0
    bound_messages: int = 0
    exchanges: int = 0
    vectors_sent: int = 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def x_bar(self) -> np.ndarray:
        return self.X.mean(axis=0)

    @property
    def y_bar(self) -> np.ndarray | None:
        return None if self.Y is None else self.Y.mean(axis=0)

    def tracking_deviation(self) -> float:
        """max |(1/n)1^T Y - (1/n)1^T G_last| relative to 1 + max |(1/n)1^T G_last|."""
        if self.Y is None:
            return 0.0
        g_bar = self.G_last.mean(axis=0)
        return float(np.max(np.abs(self.Y.mean(axis=0) - g_bar)) / (1.0 + np.max(np.abs(g_bar))))

    def copy(self) -> "AlgorithmState":
        return AlgorithmState(
            self.X.copy(),
            None if self.Y is None else self.Y.copy(),
            self.G_last.copy(),
            self.k,
            self.grad_evals,
            self.messages,
            self.bound_messages,
            self.exchanges,
            self.vectors_sent,
        )


@dataclass(frozen=True)
class StepsizePolicy:
    kind: StepsizeKind
    alpha: float | None = None
    theta: float | None = None
    m: float | None = None

    def __post_init__(self):
        if self.kind is StepsizeKind.CONSTANT:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError(f"constant stepsize needs alpha > 0, got {self.alpha}")
        else:
            if self.theta is None or not self.theta > 0:
                raise ValueError(f"diminishing stepsize needs theta > 0, got {self.theta}")
            if self.m is None or not self.m >= 1:
                raise ValueError(f"diminishing stepsize needs m >= 1, got {self.m}")

    @classmethod
    def constant(cls, alpha: float) -> "StepsizePolicy":
        return cls(StepsizeKind.CONSTANT, alpha=float(alpha))

    @classmethod
    def diminishing(cls, theta: float, m: float) -> "StepsizePolicy":
        return cls(StepsizeKind.DIMINISHING, theta=float(theta), m=float(m))

    @classmethod
    def parse(cls, text: str) -> "StepsizePolicy":
        """`constant:ALPHA` or `diminishing:THETA,M`."""
        kind_text, _, params = text.strip().partition(":")
        try:
            kind = StepsizeKind(kind_text)
            values = [float(v) for v in params.split(",")]
        except ValueError:
            raise ConfigError(f"bad stepsize descriptor '{text}'") from None
        expected = 1 if kind is StepsizeKind.CONSTANT else 2
        if len(values) != expected:
            raise ConfigError(f"stepsize '{kind.value}' takes {expected} parameter(s), got '{params}'")
        try:
            return cls.constant(*values) if kind is StepsizeKind.CONSTANT else cls.diminishing(*values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def render(self) -> str:
        if self.kind is StepsizeKind.CONSTANT:
            return f"constant:{self.alpha!r}"
        return f"diminishing:{self.theta!r},{self.m!r}"


def stepsize_at(policy: StepsizePolicy, k: int) -> float:
    """alpha for a constant policy, theta/(m + k) for a diminishing one."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if policy.kind is StepsizeKind.CONSTANT:
        return policy.alpha
    return policy.theta / (policy.m + k)


@dataclass(frozen=True)
class GossipEvent:
    i: int
    j: int

    @property
    def exchanged(self) -> bool:
        return self.i != self.j


def init_state(pr: Problem, x0: np.ndarray, bank: StreamBank, tracker: bool = True) -> AlgorithmState:
    """X = x0 and Y = G_last = one fresh sample per agent at x0."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (pr.n, pr.p):
        raise ValueError(f"x0 must have shape {(pr.n, pr.p)}, got {x0.shape}")
    samples = pr.sample_gradients(np.arange(pr.n), x0, bank)
    return AlgorithmState(
        X=x0.copy(),
        Y=samples.copy() if tracker else None,
        G_last=samples,
        grad_evals=pr.n,
    )
