"""Closed-form guarantees for DSGT and GSGT.

Every function takes a TheoryInputs value and returns plain numbers or small
frozen records. Singularities at rho = 0 resolve to their limits: terms with
rho in a denominator become +inf inside a min and 0 inside a sum.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np
from scipy import linalg

from core.errors import PreconditionError

logger = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class TheoryInputs:
    """Problem and network constants.

    Attributes:
        n: Number of agents
        mu: Strong convexity
        L: Gradient Lipschitz constant
        sigma2: Gradient noise variance bound
        rho: rho_w for DSGT, rho_wbar for GSGT
        w_minus_i_norm: ||W - I||
        gamma: Slack parameter Gamma > 1
    """

    n: int
    mu: float
    L: float
    sigma2: float
    rho: float
    w_minus_i_norm: float = 0.0
    gamma: float = 2.0

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError("n must be at least 1")
        if not 0 < self.mu <= self.L:
            raise PreconditionError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")
        if not 0 <= self.rho < 1:
            raise PreconditionError(f"rho must lie in [0, 1), got {self.rho}")
        if self.gamma <= 1:
            raise PreconditionError(f"Gamma must exceed 1, got {self.gamma}")
        if self.sigma2 < 0 or self.w_minus_i_norm < 0:
            raise PreconditionError("sigma2 and ||W - I|| must be nonnegative")

    @property
    def condition_number(self) -> float:
        return self.L / self.mu

    @property
    def eta(self) -> float:
        return 1.0 / (self.n * (1.0 - self.rho))

    def with_gamma(self, gamma: float) -> "TheoryInputs":
        return replace(self, gamma=gamma)


@dataclass(frozen=True)
class ContractionMatrix:
    matrix: np.ndarray
    betas: tuple[float, ...]

    @property
    def betas_positive(self) -> bool:
        return all(b > 0 for b in self.betas)


@dataclass(frozen=True)
class LimitBounds:
    """Limiting error bounds split into noise-only and network-dependent parts."""

    opt_noise: float
    opt_network: float
    consensus: float
    M_const: float

    @property
    def opt(self) -> float:
        return self.opt_noise + self.opt_network


@dataclass(frozen=True)
class MCondition:
    passed: bool
    condition1_threshold: float
    condition1_margin: float
    condition2_lhs: float
    condition2_rhs: float
    C: float
    reason: str = ""

    @property
    def condition2_margin(self) -> float:
        return self.condition2_lhs - self.condition2_rhs


@dataclass(frozen=True)
class Envelope:
    leading: float
    coefficient: float
    unconstrained_terms: tuple[str, ...] = (
        "O_k(1)/(m+k)^(theta*mu) coefficient (depends on proof-internal constants)",
        "O_k(1)/(m+k)^2 coefficient (depends on proof-internal constants)",
    )


@dataclass(frozen=True)
class CostEstimates:
    """Leading-order iteration and communication counts with unit hidden constants."""

    epsilon: float
    K_d: float
    N_d: float
    N_d_comm: float
    K_g: float
    N_g: float
    N_g_comm: float

    @property
    def comm_ratio(self) -> float:
        return self.N_d_comm / self.N_g_comm if self.N_g_comm > 0 else math.nan

    @property
    def grad_ratio(self) -> float:
        return self.N_d / self.N_g if self.N_g > 0 else math.nan


@dataclass
class TheoryReport:
    """Evaluated bounds for one algorithm, network and stepsize."""

    algorithm: str
    alpha: float
    alpha_max: float
    matrix: np.ndarray
    spectral_radius: float
    rate_bound: float
    limits: LimitBounds
    exact_limits: tuple[float, float, float] | None
    flags: dict[str, bool]
    inputs: TheoryInputs
    costs: CostEstimates | None = None
    notes: list[str] = field(default_factory=list)
    extra: dict[str, object] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.flags.values())

    def flat(self) -> dict[str, object]:
        """Flat key/value view for text and JSON reports."""
        out: dict[str, object] = {
            "algorithm": self.algorithm,
            "n": self.inputs.n,
            "mu": self.inputs.mu,
            "L": self.inputs.L,
            "sigma2": self.inputs.sigma2,
            "rho": self.inputs.rho,
            "w_minus_i_norm": self.inputs.w_minus_i_norm,
            "gamma": self.inputs.gamma,
            "alpha": self.alpha,
            "alpha_max": self.alpha_max,
            "spectral_radius": self.spectral_radius,
            "rate_bound": self.rate_bound,
            "limit_opt": self.limits.opt,
            "limit_opt_noise": self.limits.opt_noise,
            "limit_opt_network": self.limits.opt_network,
            "limit_consensus": self.limits.consensus,
            "M_const": self.limits.M_const,
        }
        for r, row in enumerate(self.matrix):
            for c, value in enumerate(row):
                out[f"matrix_{r + 1}{c + 1}"] = float(value)
        if self.exact_limits is not None:
            for name, value in zip(("opt", "consensus", "tracking"), self.exact_limits):
                out[f"exact_limit_{name}"] = value
        for name, value in self.flags.items():
            out[f"flag_{name}"] = value
        if self.costs is not None:
            for name in ("epsilon", "K_d", "N_d", "N_d_comm", "K_g", "N_g", "N_g_comm"):
                out[f"cost_{name}"] = getattr(self.costs, name)
            out["cost_comm_ratio"] = self.costs.comm_ratio
            out["cost_grad_ratio"] = self.costs.grad_ratio
        out.update(self.extra)
        for i, note in enumerate(self.notes):
            out[f"note_{i}"] = note
        return out


def spectral_radius_3x3(M: np.ndarray) -> float:
    return float(np.max(np.abs(linalg.eigvals(np.asarray(M, dtype=float)))))


def is_irreducible(M: np.ndarray) -> bool:
    """Strong connectivity of the support digraph."""
    support = nx.from_numpy_array((np.asarray(M) > 0).astype(int), create_using=nx.DiGraph)
    return nx.is_strongly_connected(support)


def radius_below(M: np.ndarray, lam: float) -> bool:
    """rho(M) < lam decided by the sign of det(lam*I - M).

    Valid for nonnegative 3x3 M with every diagonal entry below lam. Reducible
    matrices are accepted: their block-triangular form has at most one block
    larger than 1x1, so the determinant sign still decides.

    Raises:
        PreconditionError: negative entry, wrong shape or diagonal >= lam
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise PreconditionError(f"expected a 3x3 matrix, got {M.shape}")
    if np.any(M < 0):
        raise PreconditionError("matrix has negative entries")
    if np.any(np.diag(M) >= lam):
        raise PreconditionError(f"diagonal entries must be below {lam}")
    if not is_irreducible(M):
        logger.debug("determinant radius test on a reducible matrix")
    return bool(linalg.det(lam * np.eye(3) - M) > 0)


def _exact_limits(A: np.ndarray, noise: np.ndarray) -> tuple[float, float, float] | None:
    """(I - A)^{-1} b, the fixed point the closed-form bounds relax."""
    if spectral_radius_3x3(A) >= 1:
        return None
    fixed = linalg.solve(np.eye(3) - A, noise)
    return float(fixed[0]), float(fixed[1]), float(fixed[2])


# DSGT


def dsgt_alpha_max(inp: TheoryInputs) -> float:
    rho, L, mu, gamma = inp.rho, inp.L, inp.mu, inp.gamma
    gap = 1.0 - rho**2
    t1 = INF if rho == 0 else gap / (12.0 * rho * L)
    t2 = gap**2 / (2.0 * math.sqrt(gamma) * L * max(6.0 * rho * inp.w_minus_i_norm, gap))
    if rho == 0:
        t3 = INF
    else:
        t3 = gap / (3.0 * rho ** (2.0 / 3.0) * L) * (mu**2 / L**2 * (gamma - 1.0) / (gamma * (gamma + 1.0))) ** (1.0 / 3.0)
    return min(t1, t2, t3)


def dsgt_beta(inp: TheoryInputs, alpha: float) -> float:
    if inp.rho == 0:
        return INF
    return (1.0 - inp.rho**2) / (2.0 * inp.rho**2) - 4.0 * alpha * inp.L - 2.0 * alpha**2 * inp.L**2


def dsgt_matrix_A(inp: TheoryInputs, alpha: float) -> ContractionMatrix:
    """The 3x3 matrix coupling optimality, consensus and tracking errors.

    A nonpositive beta is reported through `betas_positive`; the matrix is
    still returned for diagnostics.
    """
    n, mu, L, rho = inp.n, inp.mu, inp.L, inp.rho
    beta = dsgt_beta(inp, alpha)
    diag = (1.0 + rho**2) / 2.0
    inv_beta = 0.0 if beta == INF else 1.0 / beta
    a23 = 0.0 if rho == 0 else alpha**2 * (1.0 + rho**2) * rho**2 / (1.0 - rho**2)
    A = np.array(
        [
            [1.0 - alpha * mu, alpha * L**2 / (mu * n) * (1.0 + alpha * mu), 0.0],
            [0.0, diag, a23],
            [2.0 * alpha * n * L**3, (inv_beta + 2.0) * inp.w_minus_i_norm**2 * L**2 + 3.0 * alpha * L**3, diag],
        ]
    )
    return ContractionMatrix(A, (beta,))


def dsgt_noise_constant(inp: TheoryInputs, alpha: float) -> float:
    """M_sigma = [3 alpha^2 L^2 + 2(alpha L + 1)(n + 1)] sigma^2."""
    L = inp.L
    return (3.0 * alpha**2 * L**2 + 2.0 * (alpha * L + 1.0) * (inp.n + 1)) * inp.sigma2


def dsgt_limit_bounds(inp: TheoryInputs, alpha: float) -> LimitBounds:
    n, mu, L, rho, g, s2 = inp.n, inp.mu, inp.L, inp.rho, inp.gamma, inp.sigma2
    M = dsgt_noise_constant(inp, alpha)
    noise = (g + 1.0) / g * alpha * s2 / (mu * n)
    network_factor = (g + 1.0) / (g - 1.0) * 4.0 * alpha**2 * (1.0 + rho**2) * rho**2 / (1.0 - rho**2) ** 3
    network = network_factor * L**2 * (1.0 + alpha * mu) * M / (mu**2 * n)
    consensus = network_factor * (2.0 * alpha**2 * L**3 * s2 + mu * M) / mu
    return LimitBounds(noise, network, consensus, M)


def dsgt_rate_bound(inp: TheoryInputs, alpha: float) -> float:
    return 1.0 - (inp.gamma - 1.0) / (inp.gamma + 1.0) * alpha * inp.mu


def dsgt_simple_alpha(inp: TheoryInputs) -> float:
    return (inp.gamma + 1.0) / inp.gamma * (1.0 - inp.rho**2) / (8.0 * inp.mu)


def dsgt_noise_vector(inp: TheoryInputs, alpha: float) -> np.ndarray:
    return np.array([alpha**2 * inp.sigma2 / inp.n, 0.0, dsgt_noise_constant(inp, alpha)])


def dsgt_orders(inp: TheoryInputs, alpha: float) -> tuple[float, float]:
    """Unit-constant order terms of the per-agent limiting error: (noise-only, network)."""
    return (
        alpha * inp.sigma2 / (inp.mu * inp.n),
        alpha**2 / (1.0 - inp.rho) ** 3 * inp.L**2 * inp.sigma2 / inp.mu**2,
    )


def size_independent_stepsize(inp: TheoryInputs) -> float:
    """alpha ~ (mu/L^2)(1 - rho)^3/n, below which the limiting error decreases in n."""
    return inp.mu / inp.L**2 * (1.0 - inp.rho) ** 3 / inp.n


def dsgt_report(inp: TheoryInputs, alpha: float) -> TheoryReport:
    alpha_max = dsgt_alpha_max(inp)
    contraction = dsgt_matrix_A(inp, alpha)
    radius = spectral_radius_3x3(contraction.matrix)
    flags = {
        "alpha_within_bound": alpha <= alpha_max,
        "beta_positive": contraction.betas_positive,
        "alpha_below_2_over_mu_plus_L": alpha < 2.0 / (inp.mu + inp.L),
        "simple_alpha_condition": alpha <= dsgt_simple_alpha(inp),
        "contraction": radius < 1.0,
    }
    notes = []
    if inp.rho**2 >= inp.gamma / (inp.gamma + 1.0) * 2.0 * inp.mu / (3.0 * inp.L):
        notes.append("simple stepsize condition is weaker than the alpha bound here")
    return TheoryReport(
        algorithm="dsgt",
        alpha=alpha,
        alpha_max=alpha_max,
        matrix=contraction.matrix,
        spectral_radius=radius,
        rate_bound=dsgt_rate_bound(inp, alpha),
        limits=dsgt_limit_bounds(inp, alpha),
        exact_limits=_exact_limits(contraction.matrix, dsgt_noise_vector(inp, alpha)),
        flags=flags,
        inputs=inp,
        notes=notes,
    )


# Diminishing stepsize


def m_lower_bound(theta: float, inp: TheoryInputs) -> float:
    """Threshold of the first m-condition."""
    mu, L, rho = inp.mu, inp.L, inp.rho
    network = (4.0 * theta * L * rho**2 + 2.0 * theta * L * rho * math.sqrt(1.0 + 3.0 * rho**2)) / (1.0 - rho**2)
    return max(theta * (mu + L) / 2.0, network)


def check_m_condition(theta: float, m: float, inp: TheoryInputs) -> MCondition:
    """Evaluate both m-conditions for alpha_k = theta/(m + k) and the constant C."""
    mu, L, rho, w = inp.mu, inp.L, inp.rho, inp.w_minus_i_norm
    if theta * mu <= 1:
        raise PreconditionError(f"need theta*mu > 1, got {theta * mu}")
    threshold = m_lower_bound(theta, inp)
    gap = 1.0 - rho**2

    if rho == 0:
        inv_inner = 0.0
    else:
        inner = gap / (2.0 * rho**2) - 4.0 * theta * L / m - 2.0 * theta**2 * L**2 / m**2
        if inner <= 0:
            return MCondition(False, threshold, m - threshold, -INF, INF, INF, "C denominator is nonpositive")
        inv_inner = 1.0 / inner
    C = (inv_inner + 2.0) * w**2 * L**2 + 3.0 * theta * L**3 / m

    bracket = gap / 2.0 - (2.0 * m + 1.0) / (m + 1.0) ** 2
    if rho == 0:
        lhs = INF if bracket > 0 else -INF
    else:
        lhs = gap**2 / (theta**2 * (1.0 + rho**2) * rho**2) * bracket
    rhs = 1.0 / (theta * mu - 1.0) * (1.0 / mu + theta / m) * 4.0 * theta**2 * L**5 / m**3 + 2.0 * C / m**2

    reasons = []
    if not m > threshold:
        reasons.append("condition 1")
    if not lhs > rhs:
        reasons.append("condition 2")
    return MCondition(not reasons, threshold, m - threshold, lhs, rhs, C, " and ".join(reasons))


def smallest_feasible_m(theta: float, inp: TheoryInputs, limit: float = 1e12) -> int:
    """Smallest integer m passing both conditions, by doubling then bisection."""
    hi = max(1, int(math.ceil(m_lower_bound(theta, inp))))
    while not check_m_condition(theta, hi, inp).passed:
        hi *= 2
        if hi > limit:
            raise PreconditionError(f"no feasible m below {limit:g}")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid >= 1 and check_m_condition(theta, mid, inp).passed:
            hi = mid
        else:
            lo = mid
    return hi


def diminishing_envelope(theta: float, m: float, inp: TheoryInputs, k: int) -> Envelope:
    """Leading term 2 theta^2 sigma^2 / (n (theta mu - 1)(m + k)).

    The two higher-order coefficients depend on constants outside this
    module and are only named.
    """
    if theta * inp.mu <= 1:
        raise PreconditionError(f"rate formula needs theta*mu > 1, got {theta * inp.mu}")
    coefficient = 2.0 * theta**2 * inp.sigma2 / (inp.n * (theta * inp.mu - 1.0))
    return Envelope(coefficient / (m + k), coefficient)


# GSGT


def gsgt_alpha_max(inp: TheoryInputs) -> float:
    n, L, gap, Q, eta = inp.n, inp.L, 1.0 - inp.rho, inp.condition_number, inp.eta
    bracket = (
        (27.0 * (2.0 * eta + 3.0) * Q * n + 16.0 * (8.0 * eta + 9.0)) * Q * gap
        + 48.0 * (6.0 * eta + 1.0) * (8.0 * eta + 3.0)
        + 96.0 * Q * gap
    )
    return 2.0 * n * gap / (math.sqrt(inp.gamma) * L) * bracket ** -0.5


def gsgt_betas(inp: TheoryInputs, alpha: float) -> tuple[float, float]:
    n, L, gap = inp.n, inp.L, 1.0 - inp.rho
    beta1 = n * gap / (4.0 * alpha) - 4.0 * alpha * L**2
    beta2 = n * gap / 4.0 - 2.0 * alpha * L - 2.0 * alpha**2 * L**2
    return beta1, beta2


def gsgt_matrix_Ag(inp: TheoryInputs, alpha: float) -> ContractionMatrix:
    n, mu, L, rho = inp.n, inp.mu, inp.L, inp.rho
    beta1, beta2 = gsgt_betas(inp, alpha)
    diag = (1.0 + rho) / 2.0
    A = np.array(
        [
            [1.0 - 2.0 * alpha * mu / n, 2.0 * alpha * L**2 / (mu * n**2) * (1.0 + 2.0 * alpha * mu / n), 4.0 * alpha**2 / n**3],
            [8.0 * alpha**2 * L**2, diag, 2.0 * alpha / n * (1.0 / beta1 + alpha)],
            [
                8.0 * alpha**2 * L**4 + 4.0 * alpha * L**3,
                L**2 / n * (4.0 + 2.0 / beta2 + 8.0 * alpha**2 * L**2 + 4.0 * alpha * L),
                diag,
            ],
        ]
    )
    return ContractionMatrix(A, (beta1, beta2))


def gsgt_noise_constant(inp: TheoryInputs, alpha: float) -> float:
    """M_g = (4 alpha^2 L^2 + 2 alpha L) sigma^2 / n + 4(alpha L + 1) sigma^2."""
    L, s2 = inp.L, inp.sigma2
    return (4.0 * alpha**2 * L**2 + 2.0 * alpha * L) * s2 / inp.n + 4.0 * (alpha * L + 1.0) * s2


def gsgt_noise_vector(inp: TheoryInputs, alpha: float) -> np.ndarray:
    n, s2 = inp.n, inp.sigma2
    return np.array([4.0 * alpha**2 * s2 / n**3, 2.0 * alpha**2 * s2 / n, gsgt_noise_constant(inp, alpha)])


def gsgt_limit_bounds(inp: TheoryInputs, alpha: float) -> LimitBounds:
    n, mu, L, g, s2, eta = inp.n, inp.mu, inp.L, inp.gamma, inp.sigma2, inp.eta
    gap = 1.0 - inp.rho
    factor = g / (g - 1.0) * s2 / n**2
    noise = factor * 20.0 * alpha / (mu * gap)
    network = factor * 42.0 * (6.0 * eta + 1.0) * alpha**2 * L**2 / (mu**2 * gap**2)
    consensus = 4.0 * g * s2 / ((g - 1.0) * gap**2) * (
        9.0 * (6.0 * eta + 1.0) * alpha**2 / n + 72.0 * alpha**3 * L**2 / (mu * n**2)
    )
    return LimitBounds(noise, network, consensus, gsgt_noise_constant(inp, alpha))


def gsgt_rate_bound(inp: TheoryInputs, alpha: float) -> float:
    """1 - ((2 Gamma - 3)/Gamma) alpha mu / n, meaningful for Gamma > 3/2."""
    if inp.gamma <= 1.5:
        raise PreconditionError(f"GSGT rate bound needs Gamma > 3/2, got {inp.gamma}")
    return 1.0 - (2.0 * inp.gamma - 3.0) / inp.gamma * alpha * inp.mu / inp.n


def gsgt_orders(inp: TheoryInputs, alpha: float) -> tuple[float, float]:
    n, gap = inp.n, 1.0 - inp.rho
    return (
        alpha / gap * inp.sigma2 / (inp.mu * n**2),
        alpha**2 / gap**3 * inp.L**2 * inp.sigma2 / (inp.mu**2 * n**3),
    )


def gsgt_report(inp: TheoryInputs, alpha: float) -> TheoryReport:
    alpha_max = gsgt_alpha_max(inp)
    contraction = gsgt_matrix_Ag(inp, alpha)
    radius = spectral_radius_3x3(contraction.matrix)
    flags = {
        "alpha_within_bound": alpha <= alpha_max,
        "beta_positive": contraction.betas_positive,
        "alpha_below_n_over_mu_plus_L": alpha < inp.n / (inp.mu + inp.L),
        "contraction": radius < 1.0,
    }
    notes = []
    if inp.gamma > 1.5:
        rate = gsgt_rate_bound(inp, alpha)
    else:
        rate = math.nan
        notes.append("rate bound needs Gamma > 3/2")
    return TheoryReport(
        algorithm="gsgt",
        alpha=alpha,
        alpha_max=alpha_max,
        matrix=contraction.matrix,
        spectral_radius=radius,
        rate_bound=rate,
        limits=gsgt_limit_bounds(inp, alpha),
        exact_limits=_exact_limits(contraction.matrix, gsgt_noise_vector(inp, alpha)),
        flags=flags,
        inputs=inp,
        notes=notes,
    )


def cost_model(epsilon: float, inp: TheoryInputs, num_edges: int) -> CostEstimates:
    """Order-of-magnitude cost to reach (1/n)E||x_k - 1x*||^2 <= epsilon.

    Hidden constants are 1, so only the ratios are quantitative. `inp.rho` is
    read as rho_wbar.
    """
    if not 0 < epsilon < 1:
        raise PreconditionError(f"epsilon must lie in (0, 1), got {epsilon}")
    base = inp.sigma2 / (inp.n * inp.mu**2) * math.log(1.0 / epsilon) / epsilon
    K_d = base
    K_g = base / (1.0 - inp.rho)
    return CostEstimates(
        epsilon=epsilon,
        K_d=K_d,
        N_d=inp.n * K_d,
        N_d_comm=2.0 * num_edges * K_d,
        K_g=K_g,
        N_g=2.0 * K_g,
        N_g_comm=2.0 * K_g,
    )
