import logging
from dataclasses import dataclass, field
from functools import cached_property

import networkx as nx
import numpy as np

from components.enums import TopologyKind
from core.errors import ConfigError, ConnectivityError, PreconditionError
from core.streams import generator

logger = logging.getLogger(__name__)

ER_RETRY_BUDGET = 100


@dataclass(frozen=True)
class TopologySpec:
    """Parsed topology descriptor: `ring`, `path`, `lattice:RxC`, `complete`, `er:PROB:SEED`."""

    kind: TopologyKind
    rows: int | None = None
    cols: int | None = None
    prob: float | None = None
    seed: int | None = None

    @classmethod
    def parse(cls, text: str) -> "TopologySpec":
        parts = text.strip().split(":")
        try:
            kind = TopologyKind(parts[0])
        except ValueError:
            raise ConfigError(f"unknown topology '{parts[0]}'") from None

        if kind is TopologyKind.LATTICE:
            if len(parts) != 2 or "x" not in parts[1]:
                raise ConfigError(f"lattice expects 'lattice:RxC', got '{text}'")
            rows, cols = parts[1].split("x", 1)
            try:
                return cls(kind, rows=int(rows), cols=int(cols))
            except ValueError:
                raise ConfigError(f"bad lattice shape '{parts[1]}'") from None
        if kind is TopologyKind.ERDOS_RENYI:
            if len(parts) != 3:
                raise ConfigError(f"erdos-renyi expects 'er:PROB:SEED', got '{text}'")
            try:
                prob, seed = float(parts[1]), int(parts[2])
            except ValueError:
                raise ConfigError(f"bad erdos-renyi parameters in '{text}'") from None
            if not 0.0 <= prob <= 1.0:
                raise ConfigError(f"erdos-renyi probability {prob} outside [0, 1]")
            if seed < 0:
                raise ConfigError("erdos-renyi seed must be nonnegative")
            return cls(kind, prob=prob, seed=seed)
        if len(parts) != 1:
            raise ConfigError(f"topology '{kind.value}' takes no parameters")
        return cls(kind)

    def render(self) -> str:
        if self.kind is TopologyKind.LATTICE:
            return f"lattice:{self.rows}x{self.cols}"
        if self.kind is TopologyKind.ERDOS_RENYI:
            return f"er:{self.prob!r}:{self.seed}"
        return self.kind.value


@dataclass(frozen=True)
class Graph:
    """Undirected agent network.

    Edges are stored once as (i, j) with i < j, sorted.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    accepted_seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a graph needs at least one vertex")
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < j < self.n):
                raise ValueError(f"edge ({i}, {j}) is not normalized for n={self.n}")

    @classmethod
    def from_networkx(cls, nx_graph: nx.Graph, accepted_seed: int | None = None) -> "Graph":
        edges = {tuple(sorted((int(i), int(j)))) for i, j in nx_graph.edges() if i != j}
        return cls(nx_graph.number_of_nodes(), tuple(sorted(edges)), accepted_seed)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._edge_set

    @cached_property
    def _edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def neighbors(self, i: int) -> list[int]:
        return [b if a == i else a for a, b in self.edges if i in (a, b)]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.edges:
            idx = np.array(self.edges)
            a[idx[:, 0], idx[:, 1]] = 1.0
            a[idx[:, 1], idx[:, 0]] = 1.0
        return a

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())


def er_pair_indicator(n: int, prob: float, seed: int, attempt: int) -> np.ndarray:
    """Bernoulli(prob) indicator over the n(n-1)/2 pairs (i<j) in lexicographic order.

    Each attempt draws from its own Philox stream keyed by (seed, attempt).
    """
    rng = generator(seed, attempt)
    return rng.random(n * (n - 1) // 2) < prob


def _erdos_renyi(n: int, prob: float, seed: int) -> Graph:
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    attempted = []
    for attempt in range(ER_RETRY_BUDGET):
        attempted.append(attempt)
        mask = er_pair_indicator(n, prob, seed, attempt)
        g = Graph(n, tuple(p for p, keep in zip(pairs, mask) if keep), accepted_seed=attempt)
        if g.is_connected():
            logger.info("Erdos-Renyi graph n=%d p=%s seed=%d accepted at sub-seed %d", n, prob, seed, attempt)
            return g
        logger.debug("Erdos-Renyi sub-seed %d disconnected, resampling", attempt)
    raise ConnectivityError(f"no connected G({n}, {prob}) within {ER_RETRY_BUDGET} attempts", attempted)


def build_graph(spec: TopologySpec | str, n: int) -> Graph:
    """Build the described undirected graph.

    Args:
        spec: Topology descriptor, parsed or as text
        n: Number of agents

    Returns:
        A connected Graph. Erdos-Renyi graphs record the accepted sub-seed.
    """
    if isinstance(spec, str):
        spec = TopologySpec.parse(spec)
    if n < 1:
        raise PreconditionError(f"need n >= 1, got {n}")

    if spec.kind is TopologyKind.RING:
        return Graph.from_networkx(nx.cycle_graph(n))
    if spec.kind is TopologyKind.PATH:
        return Graph.from_networkx(nx.path_graph(n))
    if spec.kind is TopologyKind.COMPLETE:
        return Graph.from_networkx(nx.complete_graph(n))
    if spec.kind is TopologyKind.LATTICE:
        if spec.rows * spec.cols != n:
            raise PreconditionError(f"lattice {spec.rows}x{spec.cols} does not have {n} vertices")
        grid = nx.convert_node_labels_to_integers(nx.grid_2d_graph(spec.rows, spec.cols), ordering="sorted")
        return Graph.from_networkx(grid)
    return _erdos_renyi(n, spec.prob, spec.seed)
