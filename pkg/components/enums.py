from enum import Enum


class AlgorithmKind(Enum):
    DSGT = "dsgt"
    GSGT = "gsgt"
    DSG = "dsg"
    CSG = "csg"

    @property
    def tracks_gradients(self) -> bool:
        """Whether the algorithm carries a gradient tracker Y."""
        return self in (AlgorithmKind.DSGT, AlgorithmKind.GSGT)

    @property
    def label(self) -> str:
        return self.value.upper()


class MatrixKind(Enum):
    CONSENSUS = "consensus-W"
    GOSSIP = "gossip-Pi"
    EXPECTED_GOSSIP = "expected-gossip-Wbar"


class TopologyKind(Enum):
    RING = "ring"
    PATH = "path"
    LATTICE = "lattice"
    COMPLETE = "complete"
    ERDOS_RENYI = "er"


class WeightRule(Enum):
    LAZY_METROPOLIS = "lazy-metropolis"
    METROPOLIS = "metropolis"
    # (1/n)11^T, only defined on complete graphs
    UNIFORM = "uniform"

    @property
    def lazy(self) -> bool:
        return self is WeightRule.LAZY_METROPOLIS


class ProblemKind(Enum):
    RIDGE = "ridge"
    QUADRATIC = "quad"


class StepsizeKind(Enum):
    CONSTANT = "constant"
    DIMINISHING = "diminishing"


class NormKind(Enum):
    """Matrix norm used for ||W - I|| inside the contraction matrix."""

    FROBENIUS = "frobenius"
    SPECTRAL = "spectral"
