import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from components.enums import AlgorithmKind
from core.metrics import EnsembleSummary, TrajectoryMetrics

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
RUN_FILE = "run_{replica:03d}.csv"
ENSEMBLE_FILE = "ensemble.csv"
PROJECTION_FILE = "projection.csv"


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    if value is None:
        return ""
    return str(value)


def render_flat(data: dict[str, object]) -> str:
    """`key=value` lines in insertion order."""
    return "".join(f"{key}={format_value(value)}\n" for key, value in data.items())


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def write_json(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2) + "\n")
    logger.info("wrote %s", path)
    return path


def write_flat(path: Path, data: dict[str, object]) -> Path:
    path.write_text(render_flat(data))
    logger.info("wrote %s", path)
    return path


def write_csv(path: Path, frame: pd.DataFrame, meta: dict[str, str]) -> Path:
    """CSV with `# key=value` metadata lines above the column header.

    Floats use 17 significant digits and NaN becomes an empty cell.
    """
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, na_rep="")
    return path


def write_run(directory: Path, run: TrajectoryMetrics) -> Path:
    meta = run.header()
    if run.halted:
        meta["halt_reason"] = run.halt_reason
    return write_csv(directory / RUN_FILE.format(replica=run.replica), run.frame(), meta)


def ensemble_meta(summary: EnsembleSummary, seed: int, config_hash: str) -> dict[str, str]:
    meta = {
        "algorithm": summary.algorithm,
        "seed": str(seed),
        "replicas": str(summary.replicas),
        "halted": str(summary.halted),
    }
    if summary.halted_replicas:
        meta["halted_replicas"] = ",".join(str(r) for r in summary.halted_replicas)
    if config_hash:
        meta["config_hash"] = config_hash
    return meta


def write_ensemble(directory: Path, summary: EnsembleSummary, meta: dict[str, str]) -> Path:
    return write_csv(directory / ENSEMBLE_FILE, summary.frame(), meta)


def projection_frame(summary: EnsembleSummary, algorithm: AlgorithmKind, n: int) -> pd.DataFrame:
    """Mean per-agent error against iterations, epochs and cumulative costs.

    A GSGT iteration touches one or two agents, so its epoch is k/n; the
    synchronous methods count one epoch per iteration.
    """
    k = summary.k
    epoch = k / n if algorithm is AlgorithmKind.GSGT else k.astype(float)
    return pd.DataFrame(
        {
            "k": k,
            "epoch": epoch,
            "per_agent_mean_err_mean": summary.means["per_agent_mean_err"],
            "per_agent_mean_err_se": summary.ses["per_agent_mean_err"],
            "grad_evals_mean": summary.means["grad_evals"],
            "messages_mean": summary.means["messages"],
            "bound_messages_mean": summary.means["bound_messages"],
            "exchanges_mean": summary.means["exchanges"],
            "vectors_sent_mean": summary.means["vectors_sent"],
        }
    )


def write_projection(directory: Path, summary: EnsembleSummary, algorithm: AlgorithmKind, n: int, meta: dict[str, str]) -> Path:
    return write_csv(directory / PROJECTION_FILE, projection_frame(summary, algorithm, n), meta)
