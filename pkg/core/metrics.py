import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from core.errors import AllReplicasDivergedError, PreconditionError
from core.state import AlgorithmState

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("k", "opt_err", "consensus_err", "tracking_err", "per_agent_mean_err", "grad_evals", "messages")
ERROR_COLUMNS = ("opt_err", "consensus_err", "tracking_err", "per_agent_mean_err")
COUNTER_COLUMNS = ("grad_evals", "messages")
# kept alongside the CSV columns for the projection files
EXTRA_COLUMNS = ("bound_messages", "exchanges", "vectors_sent")

TAIL_WINDOWS = 5


@dataclass(frozen=True)
class MetricRow:
    k: int
    opt_err: float
    consensus_err: float
    tracking_err: float
    per_agent_mean_err: float
    grad_evals: int
    messages: int
    bound_messages: int = 0
    exchanges: int = 0
    vectors_sent: int = 0


def record(state: AlgorithmState, x_star: np.ndarray) -> MetricRow:
    """All error functionals of a state.

    Algorithms without a tracker report tracking_err as NaN.
    """
    n = state.n
    x_bar = state.X.mean(axis=0)
    spread = state.X - x_bar
    offset = state.X - x_star
    if state.Y is None:
        tracking = float("nan")
    else:
        dy = state.Y - state.Y.mean(axis=0)
        tracking = float(np.sum(dy * dy))
    return MetricRow(
        k=state.k,
        opt_err=float(np.sum((x_bar - x_star) ** 2)),
        consensus_err=float(np.sum(spread * spread)),
        tracking_err=tracking,
        per_agent_mean_err=float(np.sum(offset * offset)) / n,
        grad_evals=state.grad_evals,
        messages=state.messages,
        bound_messages=state.bound_messages,
        exchanges=state.exchanges,
        vectors_sent=state.vectors_sent,
    )


@dataclass
class TrajectoryMetrics:
    """Recorded rows of one run plus its metadata."""

    columns: dict[str, np.ndarray]
    algorithm: str
    seed: int
    replica: int
    config_hash: str = ""
    halted_at: int | None = None
    halt_reason: str = ""
    max_tracking_deviation: float = 0.0

    @property
    def halted(self) -> bool:
        return self.halted_at is not None

    @property
    def k(self) -> np.ndarray:
        return self.columns["k"]

    def __len__(self) -> int:
        return len(self.columns["k"])

    def frame(self, extra: bool = False) -> pd.DataFrame:
        names = METRIC_COLUMNS + (EXTRA_COLUMNS if extra else ())
        return pd.DataFrame({name: self.columns[name] for name in names})

    def header(self) -> dict[str, str]:
        meta = {"algorithm": self.algorithm, "seed": str(self.seed), "replica": str(self.replica)}
        if self.config_hash:
            meta["config_hash"] = self.config_hash
        if self.halted:
            meta["halted_at"] = str(self.halted_at)
        return meta


class TrajectoryRecorder:
    """Collects metric rows every `stride` iterations.

    The caller decides which iterations to observe; the recorder keeps the
    k = 0 row as the reference for blow-up detection.
    """

    def __init__(self, x_star: np.ndarray, algorithm: str, seed: int, replica: int, config_hash: str = "", stride: int = 1):
        if stride < 1:
            raise ValueError("stride must be at least 1")
        self.x_star = x_star
        self.algorithm = algorithm
        self.seed = seed
        self.replica = replica
        self.config_hash = config_hash
        self.stride = stride
        self.rows: list[MetricRow] = []
        self.max_tracking_deviation = 0.0

    @property
    def initial_error(self) -> float:
        return self.rows[0].per_agent_mean_err if self.rows else 0.0

    def wants(self, k: int, last: bool) -> bool:
        return last or k % self.stride == 0

    def observe(self, state: AlgorithmState) -> MetricRow:
        row = record(state, self.x_star)
        self.rows.append(row)
        return row

    def track(self, state: AlgorithmState) -> float:
        """Update the tracking check and return the current per-agent error."""
        self.max_tracking_deviation = max(self.max_tracking_deviation, state.tracking_deviation())
        offset = state.X - self.x_star
        return float(np.sum(offset * offset)) / state.n

    def finish(self, halted_at: int | None = None, reason: str = "") -> TrajectoryMetrics:
        names = METRIC_COLUMNS + EXTRA_COLUMNS
        columns = {}
        for name in names:
            values = [getattr(row, name) for row in self.rows]
            dtype = float if name in ERROR_COLUMNS else np.int64
            columns[name] = np.array(values, dtype=dtype)
        return TrajectoryMetrics(
            columns=columns,
            algorithm=self.algorithm,
            seed=self.seed,
            replica=self.replica,
            config_hash=self.config_hash,
            halted_at=halted_at,
            halt_reason=reason,
            max_tracking_deviation=self.max_tracking_deviation,
        )


@dataclass(frozen=True)
class TailEstimate:
    value: float
    se: float


@dataclass(frozen=True)
class RateFit:
    ratio: float
    slope: float
    intercept: float
    residual: float
    ratio_low: float
    ratio_high: float


@dataclass
class EnsembleSummary:
    """Pointwise mean and standard error over the replicas that did not halt."""

    k: np.ndarray
    means: dict[str, np.ndarray]
    ses: dict[str, np.ndarray]
    replicas: int
    halted: int
    algorithm: str = ""
    halted_replicas: list[int] = field(default_factory=list)
    max_tracking_deviation: float = 0.0

    def frame(self, extra: bool = False) -> pd.DataFrame:
        names = METRIC_COLUMNS[1:] + (EXTRA_COLUMNS if extra else ())
        data = {"k": self.k}
        for name in names:
            data[f"{name}_mean"] = self.means[name]
            data[f"{name}_se"] = self.ses[name]
        return pd.DataFrame(data)

    def tail(self, metric: str = "per_agent_mean_err", window_fraction: float = 0.2) -> TailEstimate:
        value = tail_limsup(self.means[metric], window_fraction)
        width = _tail_length(len(self.k), window_fraction)
        se = self.ses[metric][-width:]
        return TailEstimate(value, float(np.mean(se)) if np.all(np.isfinite(se)) else float("nan"))

    def first_reach(self, level: float, counter: str = "messages", metric: str = "per_agent_mean_err") -> float | None:
        """Mean cumulative `counter` at the first row whose ensemble mean is at or below level."""
        below = np.nonzero(self.means[metric] <= level)[0]
        if below.size == 0:
            return None
        return float(self.means[counter][below[0]])


def messages_to_reach(summary: EnsembleSummary, level: float, exact: bool = True) -> float | None:
    return summary.first_reach(level, "messages" if exact else "bound_messages")


def grad_evals_to_reach(summary: EnsembleSummary, level: float) -> float | None:
    return summary.first_reach(level, "grad_evals")


def aggregate(runs: list[TrajectoryMetrics]) -> EnsembleSummary:
    """Pointwise mean and standard error across replicas.

    Halted replicas are excluded and counted. A single surviving replica gets
    NaN standard errors.

    Raises:
        PreconditionError: no runs, or mismatched step grids
        AllReplicasDivergedError: every replica halted
    """
    if not runs:
        raise PreconditionError("cannot aggregate an empty set of runs")
    algorithm = runs[0].algorithm
    kept = [r for r in runs if not r.halted]
    halted = [r.replica for r in runs if r.halted]
    if not kept:
        raise AllReplicasDivergedError([algorithm])
    k = kept[0].k
    for r in kept[1:]:
        if not np.array_equal(r.k, k):
            raise PreconditionError("runs have different step grids")
    if halted:
        logger.warning("%s: %d of %d replicas halted and are excluded", algorithm, len(halted), len(runs))

    means, ses = {}, {}
    for name in METRIC_COLUMNS[1:] + EXTRA_COLUMNS:
        stacked = np.vstack([r.columns[name].astype(float) for r in kept])
        means[name] = stacked.mean(axis=0)
        if len(kept) > 1:
            ses[name] = stacked.std(axis=0, ddof=1) / np.sqrt(len(kept))
        else:
            ses[name] = np.full(len(k), np.nan)
    return EnsembleSummary(
        k=k.copy(),
        means=means,
        ses=ses,
        replicas=len(kept),
        halted=len(halted),
        algorithm=algorithm,
        halted_replicas=halted,
        max_tracking_deviation=max(r.max_tracking_deviation for r in kept),
    )


def _tail_length(length: int, window_fraction: float) -> int:
    if not 0 < window_fraction <= 1:
        raise PreconditionError(f"window_fraction must be in (0, 1], got {window_fraction}")
    return int(np.ceil(window_fraction * length))


def tail_limsup(series: np.ndarray, window_fraction: float = 0.2) -> float:
    """Max of the window means over the final `window_fraction` of the series.

    The tail is split into 5 contiguous windows.
    """
    series = np.asarray(series, dtype=float)
    width = _tail_length(len(series), window_fraction)
    if width < TAIL_WINDOWS:
        raise PreconditionError(f"tail of {width} rows is shorter than {TAIL_WINDOWS} windows")
    windows = np.array_split(series[-width:], TAIL_WINDOWS)
    return float(max(w.mean() for w in windows))


def fit_linear_rate(
    series: np.ndarray,
    fit_window: tuple[int, int] | None = None,
    k: np.ndarray | None = None,
) -> RateFit:
    """Least squares of log(series) against k.

    Args:
        series: Positive values
        fit_window: (start, stop) row slice, defaults to the last half
        k: Iteration of each row, defaults to 0, 1, 2, ...

    Returns:
        Per-step ratio exp(slope) with a two-standard-error band
    """
    series = np.asarray(series, dtype=float)
    k = np.arange(len(series), dtype=float) if k is None else np.asarray(k, dtype=float)
    start, stop = fit_window if fit_window is not None else (len(series) // 2, len(series))
    values, steps = series[start:stop], k[start:stop]
    if len(values) < 2:
        raise PreconditionError("need at least two points to fit a rate")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise PreconditionError("rate fit needs positive finite values")

    fit = stats.linregress(steps, np.log(values))
    predicted = fit.intercept + fit.slope * steps
    residual = float(np.sqrt(np.mean((np.log(values) - predicted) ** 2)))
    band = 2.0 * fit.stderr
    return RateFit(
        ratio=float(np.exp(fit.slope)),
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        residual=residual,
        ratio_low=float(np.exp(fit.slope - band)),
        ratio_high=float(np.exp(fit.slope + band)),
    )
