import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from components.enums import AlgorithmKind, NormKind, TopologyKind, WeightRule
from components.problems import ProblemSpec
from core.errors import ConfigError
from core.graph import TopologySpec
from core.state import StepsizePolicy

logger = logging.getLogger(__name__)


class RunDefaults:
    NAME = "experiment"
    WEIGHTS = WeightRule.LAZY_METROPOLIS
    STEPS = 1000
    REPLICAS = 10
    SEED = 0
    OUTPUT = "results"
    GAMMA = 2.0
    X0 = "zeros"
    RECORD_EVERY = 1
    NORM = NormKind.FROBENIUS
    SIGMA_RADIUS = 1.0
    SIGMA_SAMPLES = 1000


class TheoryDefaults:
    EPSILON = 1e-3
    TAIL_FRACTION = 0.2
    # tail estimates must sit this many standard errors below a bound
    BOUND_SE_MARGIN = 3.0
    # common target level for the communication comparison, as a multiple of the worst tail
    TARGET_LEVEL_FACTOR = 3.0


class Fig1Defaults:
    CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
    CONFIGS = ("fig1_n10.cfg", "fig1_n25.cfg", "fig1_n100.cfg")


class EnvConfig:
    JOBS_VAR = "GRADTRACK_JOBS"


SWEEP_ALIASES = {"alpha": "stepsize"}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    topology: TopologySpec
    agents: int
    algorithms: tuple[AlgorithmKind, ...]
    stepsize: StepsizePolicy
    name: str = RunDefaults.NAME
    weights: WeightRule = RunDefaults.WEIGHTS
    stepsize_overrides: dict[AlgorithmKind, StepsizePolicy] = field(default_factory=dict)
    steps: int = RunDefaults.STEPS
    steps_overrides: dict[AlgorithmKind, int] = field(default_factory=dict)
    replicas: int = RunDefaults.REPLICAS
    replicas_overrides: dict[AlgorithmKind, int] = field(default_factory=dict)
    seed: int = RunDefaults.SEED
    output: str = RunDefaults.OUTPUT
    gamma: float = RunDefaults.GAMMA
    enforce_feasibility: bool = False
    x0: str = RunDefaults.X0
    record_every: int = RunDefaults.RECORD_EVERY
    norm: NormKind = RunDefaults.NORM
    sigma2: float | None = None
    sigma_radius: float = RunDefaults.SIGMA_RADIUS
    sigma_samples: int = RunDefaults.SIGMA_SAMPLES
    resample_graph: bool = False
    sweep: tuple[str, tuple[str, ...]] | None = None

    def stepsize_for(self, alg: AlgorithmKind) -> StepsizePolicy:
        return self.stepsize_overrides.get(alg, self.stepsize)

    def steps_for(self, alg: AlgorithmKind) -> int:
        return self.steps_overrides.get(alg, self.steps)

    def replicas_for(self, alg: AlgorithmKind) -> int:
        return self.replicas_overrides.get(alg, self.replicas)


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise ValueError(f"must be at least 1, got {number}")
    return number


def _nonnegative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise ValueError(f"must be nonnegative, got {number}")
    return number


def _bool(value: str) -> bool:
    lowered = value.lower()
    if lowered not in ("true", "false"):
        raise ValueError(f"expected true or false, got '{value}'")
    return lowered == "true"


def _gamma(value: str) -> float:
    number = float(value)
    if number <= 1:
        raise ValueError(f"Gamma must exceed 1, got {number}")
    return number


def _x0(value: str) -> str:
    if value in ("zeros", "optimum"):
        return value
    return repr(float(value))


def _sigma2(value: str) -> float | None:
    if value == "estimate":
        return None
    number = float(value)
    if number < 0:
        raise ValueError("sigma2 must be nonnegative")
    return number


def _nonnegative_float(value: str) -> float:
    number = float(value)
    if number < 0:
        raise ValueError(f"must be nonnegative, got {number}")
    return number


def _algorithms(value: str) -> tuple[AlgorithmKind, ...]:
    kinds = tuple(AlgorithmKind(item.strip()) for item in value.split(",") if item.strip())
    if not kinds:
        raise ValueError("at least one algorithm is required")
    if len(set(kinds)) != len(kinds):
        raise ValueError("algorithms are listed twice")
    return kinds


def parse_sweep(value: str) -> tuple[str, tuple[str, ...]]:
    key, eq, values = value.partition("=")
    key = key.strip()
    items = tuple(v.strip() for v in values.split(",") if v.strip())
    if not eq or not items:
        raise ValueError(f"expected 'key=v1,v2,...', got '{value}'")
    if key not in SWEEP_ALIASES and key not in SCALAR_KEYS:
        raise ValueError(f"cannot sweep over '{key}'")
    return key, items


# config key -> (dataclass field, parser)
SCALAR_KEYS: dict[str, tuple[str, Callable[[str], object]]] = {
    "name": ("name", str),
    "problem": ("problem", ProblemSpec.parse),
    "topology": ("topology", TopologySpec.parse),
    "agents": ("agents", _positive_int),
    "weights": ("weights", WeightRule),
    "algorithms": ("algorithms", _algorithms),
    "stepsize": ("stepsize", StepsizePolicy.parse),
    "steps": ("steps", _positive_int),
    "replicas": ("replicas", _positive_int),
    "seed": ("seed", _nonnegative_int),
    "output": ("output", str),
    "gamma": ("gamma", _gamma),
    "enforce_feasibility": ("enforce_feasibility", _bool),
    "x0": ("x0", _x0),
    "record_every": ("record_every", _positive_int),
    "norm": ("norm", NormKind),
    "sigma2": ("sigma2", _sigma2),
    "sigma_radius": ("sigma_radius", _nonnegative_float),
    "sigma_samples": ("sigma_samples", _positive_int),
    "resample_graph": ("resample_graph", _bool),
    "sweep": ("sweep", parse_sweep),
}

OVERRIDE_PARSERS = {
    "stepsize": StepsizePolicy.parse,
    "steps": _positive_int,
    "replicas": _positive_int,
}

REQUIRED_KEYS = ("problem", "topology", "agents", "algorithms", "stepsize")


def _read_pairs(text: str) -> dict[str, tuple[str, int]]:
    """key -> (raw value, line number). `#` starts a comment."""
    pairs: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ConfigError(f"expected 'key = value', got '{line}'", lineno)
        if key in pairs:
            raise ConfigError(f"duplicate key '{key}'", lineno)
        pairs[key] = (value, lineno)
    return pairs


def _override_target(key: str, lineno: int) -> tuple[str, AlgorithmKind] | None:
    prefix, dot, alg = key.partition(".")
    if not dot:
        return None
    if prefix not in OVERRIDE_PARSERS:
        raise ConfigError(f"unknown key '{key}'", lineno)
    try:
        return prefix, AlgorithmKind(alg)
    except ValueError:
        raise ConfigError(f"unknown algorithm '{alg}' in key '{key}'", lineno) from None


def config_from_pairs(pairs: dict[str, tuple[str, int]]) -> ExperimentConfig:
    values: dict[str, object] = {}
    overrides: dict[str, dict[AlgorithmKind, object]] = {p: {} for p in OVERRIDE_PARSERS}
    for key, (raw, lineno) in pairs.items():
        target = _override_target(key, lineno)
        try:
            if target is not None:
                prefix, alg = target
                overrides[prefix][alg] = OVERRIDE_PARSERS[prefix](raw)
                continue
            if key not in SCALAR_KEYS:
                raise ConfigError(f"unknown key '{key}'", lineno)
            name, parse = SCALAR_KEYS[key]
            values[name] = parse(raw)
        except ConfigError as exc:
            if exc.line is not None:
                raise
            raise ConfigError(f"{key}: {exc.message}", lineno) from None
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None

    missing = [key for key in REQUIRED_KEYS if key not in pairs]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")

    cfg = ExperimentConfig(
        **values,
        stepsize_overrides=overrides["stepsize"],
        steps_overrides=overrides["steps"],
        replicas_overrides=overrides["replicas"],
    )
    _cross_validate(cfg, pairs)
    return cfg


def _cross_validate(cfg: ExperimentConfig, pairs: dict[str, tuple[str, int]]):
    topo = cfg.topology
    if topo.kind is TopologyKind.LATTICE and topo.rows * topo.cols != cfg.agents:
        raise ConfigError(f"lattice {topo.rows}x{topo.cols} does not have {cfg.agents} agents", pairs["topology"][1])
    if cfg.weights is WeightRule.UNIFORM and topo.kind is not TopologyKind.COMPLETE:
        raise ConfigError("uniform weights need a complete topology", pairs["weights"][1])
    if cfg.resample_graph and topo.kind is not TopologyKind.ERDOS_RENYI:
        raise ConfigError("resample_graph needs an erdos-renyi topology", pairs["resample_graph"][1])
    for prefix in OVERRIDE_PARSERS:
        table = getattr(cfg, f"{prefix}_overrides")
        for alg in table:
            if alg not in cfg.algorithms:
                key = f"{prefix}.{alg.value}"
                raise ConfigError(f"'{key}' overrides an algorithm that is not run", pairs[key][1])


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a flat `key = value` experiment file.

    Raises:
        ConfigError: with the offending line number where one applies
    """
    return config_from_pairs(_read_pairs(text))


def load_config(path: str | Path) -> ExperimentConfig:
    logger.info("loading config %s", path)
    return parse_config(Path(path).read_text())


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "render"):
        return value.render()
    if hasattr(value, "value"):
        return value.value
    return str(value)


def config_lines(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    """Canonical (key, value) pairs in file order."""
    lines = [
        ("name", cfg.name),
        ("problem", cfg.problem.render()),
        ("topology", cfg.topology.render()),
        ("agents", str(cfg.agents)),
        ("weights", cfg.weights.value),
        ("algorithms", ",".join(a.value for a in cfg.algorithms)),
        ("stepsize", cfg.stepsize.render()),
    ]
    for alg in cfg.algorithms:
        if alg in cfg.stepsize_overrides:
            lines.append((f"stepsize.{alg.value}", cfg.stepsize_overrides[alg].render()))
    lines.append(("steps", str(cfg.steps)))
    for alg in cfg.algorithms:
        if alg in cfg.steps_overrides:
            lines.append((f"steps.{alg.value}", str(cfg.steps_overrides[alg])))
    lines.append(("replicas", str(cfg.replicas)))
    for alg in cfg.algorithms:
        if alg in cfg.replicas_overrides:
            lines.append((f"replicas.{alg.value}", str(cfg.replicas_overrides[alg])))
    lines += [
        ("seed", str(cfg.seed)),
        ("output", cfg.output),
        ("gamma", _render_value(cfg.gamma)),
        ("enforce_feasibility", _render_value(cfg.enforce_feasibility)),
        ("x0", cfg.x0),
        ("record_every", str(cfg.record_every)),
        ("norm", cfg.norm.value),
        ("sigma2", "estimate" if cfg.sigma2 is None else repr(cfg.sigma2)),
        ("sigma_radius", _render_value(cfg.sigma_radius)),
        ("sigma_samples", str(cfg.sigma_samples)),
        ("resample_graph", _render_value(cfg.resample_graph)),
    ]
    if cfg.sweep is not None:
        key, items = cfg.sweep
        lines.append(("sweep", f"{key}={','.join(items)}"))
    return lines


def render_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in config_lines(cfg))


def with_override(cfg: ExperimentConfig, key: str, value: str) -> ExperimentConfig:
    """A copy of cfg with one key replaced; `alpha=v` is shorthand for `stepsize = constant:v`.

    The sweep entry is dropped from the result.
    """
    if key in SWEEP_ALIASES:
        key, value = SWEEP_ALIASES[key], f"constant:{value}"
    pairs = {k: (v, None) for k, v in config_lines(cfg) if k != "sweep"}
    if key not in SCALAR_KEYS and _override_target(key, None) is None:
        raise ConfigError(f"unknown key '{key}'")
    pairs[key] = (value, None)
    return config_from_pairs(pairs)


def scaled(cfg: ExperimentConfig, scale: float) -> ExperimentConfig:
    """Steps and replicas multiplied by scale, each floored at 1.

    Replicas scale with steps rather than inversely, so `--scale 0.1` gives a
    cheap smoke run of the whole suite (see DESIGN.md, `--scale`).
    """
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")

    def shrink(value: int) -> int:
        return max(1, int(value * scale))

    return replace(
        cfg,
        steps=shrink(cfg.steps),
        steps_overrides={a: shrink(v) for a, v in cfg.steps_overrides.items()},
        replicas=shrink(cfg.replicas),
        replicas_overrides={a: shrink(v) for a, v in cfg.replicas_overrides.items()},
    )
