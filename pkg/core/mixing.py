import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from components.enums import MatrixKind, NormKind, TopologyKind, WeightRule
from core.errors import ConsistencyError, MixingValidationError, PreconditionError
from core.graph import Graph, TopologySpec, build_graph

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
IDENTITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Nonnegative doubly stochastic n x n weights with cached spectral quantities."""

    entries: np.ndarray
    kind: MatrixKind

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"mixing matrix must be square, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def spectral_gap_norm(self) -> float:
        return spectral_gap(self.entries)

    @cached_property
    def cumulative_rows(self) -> np.ndarray:
        """Row-wise cumulative sums, used to draw gossip partners."""
        cum = np.cumsum(self.entries, axis=1)
        cum[:, -1] = 1.0
        return cum

    def norm_minus_identity(self, norm: NormKind = NormKind.FROBENIUS) -> float:
        """||M - I|| under the chosen matrix norm."""
        d = self.entries - np.eye(self.n)
        if norm is NormKind.SPECTRAL:
            return float(linalg.svdvals(d)[0])
        return float(np.linalg.norm(d, "fro"))


@dataclass(frozen=True)
class MixingDiagnostics:
    row_residual: float
    col_residual: float
    min_entry: float
    pattern_violations: tuple[tuple[int, int], ...]
    has_positive_diagonal: bool
    spectral_gap_norm: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def gap_ok(self) -> bool:
        return self.spectral_gap_norm < 1.0 - STOCHASTIC_TOL

    @property
    def passed(self) -> bool:
        return (
            self.row_residual <= STOCHASTIC_TOL
            and self.col_residual <= STOCHASTIC_TOL
            and self.min_entry >= 0.0
            and not self.pattern_violations
            and self.gap_ok
        )

    def describe(self) -> str:
        status = "pass" if self.passed else "fail"
        return (
            f"{status}: row_residual={self.row_residual:.3g} col_residual={self.col_residual:.3g} "
            f"min_entry={self.min_entry:.3g} pattern_violations={len(self.pattern_violations)} "
            f"positive_diagonal={self.has_positive_diagonal} rho={self.spectral_gap_norm:.12g}"
        )


def spectral_gap(m: np.ndarray) -> float:
    """Spectral norm of m - (1/n)11^T.

    Symmetric inputs go through the dense symmetric eigensolver, anything else
    through singular values.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    deflated = m - np.full((n, n), 1.0 / n)
    if np.array_equal(m, m.T):
        return float(np.max(np.abs(linalg.eigvalsh(deflated))))
    return float(linalg.svdvals(deflated)[0])


def _stochastic_residuals(m: np.ndarray) -> tuple[float, float]:
    return float(np.max(np.abs(m.sum(axis=1) - 1.0))), float(np.max(np.abs(m.sum(axis=0) - 1.0)))


def validate_mixing(m: MixingMatrix, g: Graph) -> MixingDiagnostics:
    """Structured diagnostics for m against the sparsity pattern of g. Never raises on failure."""
    if m.n != g.n:
        raise ValueError(f"matrix is {m.n}x{m.n} but the graph has {g.n} vertices")
    entries = m.entries
    row_res, col_res = _stochastic_residuals(entries)
    support = (entries > 0.0) | (entries.T > 0.0)
    violations = tuple(
        (int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(support, k=1))) if not g.has_edge(i, j)
    )

    notes = []
    if m.kind is MatrixKind.EXPECTED_GOSSIP and m.n > 1 and m.spectral_gap_norm < 1.0 - 2.0 / m.n - IDENTITY_TOL:
        notes.append("rho below 1 - 2/n")
    diag = MixingDiagnostics(
        row_residual=row_res,
        col_residual=col_res,
        min_entry=float(entries.min()),
        pattern_violations=violations,
        has_positive_diagonal=bool(np.any(np.diag(entries) > 0.0)),
        spectral_gap_norm=m.spectral_gap_norm,
        notes=tuple(notes),
    )
    logger.debug("mixing %s validation %s", m.kind.value, diag.describe())
    return diag


def metropolis_weights(
    g: Graph,
    lazy: bool = True,
    kind: MatrixKind = MatrixKind.CONSENSUS,
) -> MixingMatrix:
    """Metropolis weights w_ij = 1/max{deg(i), deg(j)} on edges, halved when lazy.

    Args:
        g: Connected graph
        lazy: Use the lazy rule
        kind: CONSENSUS for W, GOSSIP for a partner-probability matrix Pi

    Returns:
        A validated MixingMatrix

    Raises:
        MixingValidationError: the weights fail validation, typically rho = 1 on a
            bipartite regular graph with the non-lazy rule
    """
    if not g.is_connected():
        raise PreconditionError("Metropolis weights need a connected graph")
    w = np.zeros((g.n, g.n))
    if g.edges:
        idx = np.array(g.edges)
        deg = g.degrees
        vals = 1.0 / np.maximum(deg[idx[:, 0]], deg[idx[:, 1]])
        if lazy:
            vals = vals / 2.0
        w[idx[:, 0], idx[:, 1]] = vals
        w[idx[:, 1], idx[:, 0]] = vals
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return _checked(MixingMatrix(w, kind), g, "use lazy Metropolis weights")


def uniform_weights(g: Graph, kind: MatrixKind = MatrixKind.CONSENSUS) -> MixingMatrix:
    """W = (1/n)11^T, which respects the sparsity pattern of complete graphs only."""
    if g.num_edges != g.n * (g.n - 1) // 2:
        raise PreconditionError("uniform weights need a complete graph")
    return _checked(MixingMatrix(np.full((g.n, g.n), 1.0 / g.n), kind), g, "uniform weights are invalid here")


def _checked(m: MixingMatrix, g: Graph, hint: str) -> MixingMatrix:
    diag = validate_mixing(m, g)
    if not diag.passed:
        raise MixingValidationError(f"{m.kind.value} failed validation ({diag.describe()}); {hint}", diag)
    return m


def gossip_expected_matrix(pi: MixingMatrix) -> MixingMatrix:
    """W_bar = (1 - 1/n)I + (Pi + Pi^T)/(2n).

    The deflated spectral norm is cross-checked against
    1 - 1/n + lambda_2((Pi + Pi^T)/2)/n.
    """
    row_res, col_res = _stochastic_residuals(pi.entries)
    if max(row_res, col_res) > STOCHASTIC_TOL or pi.entries.min() < 0.0:
        raise PreconditionError("gossip matrix is not doubly stochastic")
    n = pi.n
    sym = (pi.entries + pi.entries.T) / 2.0
    w_bar = MixingMatrix((1.0 - 1.0 / n) * np.eye(n) + sym / n, MatrixKind.EXPECTED_GOSSIP)
    if n > 1:
        lam2 = linalg.eigvalsh(sym)[-2]
        predicted = 1.0 - 1.0 / n + lam2 / n
        if abs(w_bar.spectral_gap_norm - predicted) > IDENTITY_TOL:
            raise ConsistencyError(
                f"rho_wbar={w_bar.spectral_gap_norm!r} disagrees with lambda_2 identity {predicted!r}"
            )
    return w_bar


WEIGHT_BUILDERS = {
    WeightRule.LAZY_METROPOLIS: lambda g, kind: metropolis_weights(g, lazy=True, kind=kind),
    WeightRule.METROPOLIS: lambda g, kind: metropolis_weights(g, lazy=False, kind=kind),
    WeightRule.UNIFORM: uniform_weights,
}


@dataclass(frozen=True, eq=False)
class Network:
    """A graph with its consensus weights W and gossip probabilities Pi.

    Pi uses the same weight rule as W.
    """

    graph: Graph
    weights: MixingMatrix
    gossip: MixingMatrix
    rule: WeightRule

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def expected_gossip(self) -> MixingMatrix:
        return gossip_expected_matrix(self.gossip)


def build_network(g: Graph, rule: WeightRule = WeightRule.LAZY_METROPOLIS) -> Network:
    builder = WEIGHT_BUILDERS[rule]
    return Network(g, builder(g, MatrixKind.CONSENSUS), builder(g, MatrixKind.GOSSIP), rule)


def spectral_catalog(n: int, seed: int = 0, prob: float = 0.4) -> dict[str, float]:
    """Spectral gaps 1 - rho_w under lazy Metropolis for the standard topologies of size n."""
    rows = max(r for r in range(1, int(np.sqrt(n)) + 1) if n % r == 0)
    specs = {
        "path": TopologySpec(TopologyKind.PATH),
        "ring": TopologySpec(TopologyKind.RING),
        "lattice": TopologySpec(TopologyKind.LATTICE, rows=rows, cols=n // rows),
        "erdos_renyi": TopologySpec(TopologyKind.ERDOS_RENYI, prob=prob, seed=seed),
        "complete": TopologySpec(TopologyKind.COMPLETE),
    }
    return {name: 1.0 - metropolis_weights(build_graph(spec, n)).spectral_gap_norm for name, spec in specs.items()}
