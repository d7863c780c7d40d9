import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from tqdm import tqdm

from components.base_problem import Problem, estimate_sigma2
from components.enums import AlgorithmKind, StepsizeKind, TopologyKind
from components.problems import make_problem
from core.engine import run
from core.errors import AllReplicasDivergedError, ConfigError, DivergenceError, PreconditionError
from core.graph import build_graph
from core.metrics import (
    EnsembleSummary,
    TrajectoryMetrics,
    TrajectoryRecorder,
    aggregate,
    fit_linear_rate,
    grad_evals_to_reach,
    messages_to_reach,
)
from core.mixing import Network, build_network
from core.state import StepsizePolicy, stepsize_at
from core.theory import (
    TheoryInputs,
    TheoryReport,
    check_m_condition,
    cost_model,
    dsgt_simple_alpha,
    dsgt_orders,
    dsgt_report,
    gsgt_orders,
    gsgt_report,
    m_lower_bound,
    size_independent_stepsize,
    smallest_feasible_m,
    diminishing_envelope,
)
from harness import reporter
from harness.config import ExperimentConfig, Fig1Defaults, TheoryDefaults, load_config, render_config, scaled, with_override

logger = logging.getLogger(__name__)

# fitted ratio may exceed rho(A) by this much before the rate check fails
RATE_TOLERANCE = 0.01


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Sigma2Source:
    value: float
    source: str
    stderr: float = 0.0


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything a run needs besides the algorithm and the replica index."""

    problem: Problem
    network: Network
    x_star: np.ndarray
    x0: np.ndarray
    sigma2: Sigma2Source


def initial_iterates(cfg: ExperimentConfig, x_star: np.ndarray) -> np.ndarray:
    n, p = cfg.agents, x_star.shape[0]
    if cfg.x0 == "zeros":
        return np.zeros((n, p))
    if cfg.x0 == "optimum":
        return np.tile(x_star, (n, 1))
    return np.full((n, p), float(cfg.x0))


def network_for(cfg: ExperimentConfig, replica: int = 0) -> Network:
    """Replica-specific network when `resample_graph` is set, the shared one otherwise."""
    topology = cfg.topology
    if cfg.resample_graph and replica:
        topology = replace(topology, seed=topology.seed + replica)
    return build_network(build_graph(topology, cfg.agents), cfg.weights)


def resolve_sigma2(cfg: ExperimentConfig, pr: Problem, x_star: np.ndarray) -> Sigma2Source:
    if cfg.sigma2 is not None:
        return Sigma2Source(cfg.sigma2, "config")
    if pr.sigma2 is not None:
        return Sigma2Source(pr.sigma2, "exact")
    estimate = estimate_sigma2(pr, x_star, cfg.sigma_radius, cfg.sigma_samples, cfg.seed)
    logger.warning(
        "sigma2 estimated as %.4g (se %.2g) on a ball of radius %g around x*; bounds hold only inside it",
        estimate.value,
        estimate.stderr,
        cfg.sigma_radius,
    )
    return Sigma2Source(estimate.value, "estimate", estimate.stderr)


def build_setup(cfg: ExperimentConfig) -> Setup:
    problem = make_problem(cfg.problem, cfg.agents, cfg.seed)
    network = network_for(cfg)
    x_star = problem.optimum()
    return Setup(problem, network, x_star, initial_iterates(cfg, x_star), resolve_sigma2(cfg, problem, x_star))


def _diminishing_extras(report: TheoryReport, policy: StepsizePolicy, inp: TheoryInputs):
    theta, m = policy.theta, policy.m
    report.extra.update({"theta": theta, "m": m})
    report.notes.append("bounds evaluated at the initial stepsize theta/m")
    if report.algorithm != AlgorithmKind.DSGT.value:
        return
    if theta * inp.mu <= 1:
        report.notes.append("theta*mu <= 1, no O(1/k) guarantee")
        return
    condition = check_m_condition(theta, m, inp)
    report.extra.update(
        {
            "m_condition_passed": condition.passed,
            "m_lower_bound": m_lower_bound(theta, inp),
            "m_condition2_margin": condition.condition2_margin,
            "m_condition_C": condition.C,
            "envelope_coefficient": diminishing_envelope(theta, m, inp, 0).coefficient,
        }
    )
    if condition.reason:
        report.notes.append(f"m fails {condition.reason}")
    try:
        report.extra["smallest_feasible_m"] = smallest_feasible_m(theta, inp)
    except PreconditionError as exc:
        report.notes.append(str(exc))


def theory_reports(cfg: ExperimentConfig, setup: Setup) -> dict[AlgorithmKind, TheoryReport]:
    """TheoryReport per gradient-tracking algorithm in the config.

    DSGT is evaluated with rho_w, GSGT with rho_wbar.
    """
    net = setup.network
    mu, L = setup.problem.convexity_constants()
    consensus = TheoryInputs(
        n=cfg.agents,
        mu=mu,
        L=L,
        sigma2=setup.sigma2.value,
        rho=net.weights.spectral_gap_norm,
        w_minus_i_norm=net.weights.norm_minus_identity(cfg.norm),
        gamma=cfg.gamma,
    )
    gossip = replace(consensus, rho=net.expected_gossip.spectral_gap_norm)
    costs = cost_model(TheoryDefaults.EPSILON, gossip, net.graph.num_edges)

    reports = {}
    for alg in cfg.algorithms:
        if not alg.tracks_gradients:
            continue
        policy = cfg.stepsize_for(alg)
        alpha = stepsize_at(policy, 0)
        if alg is AlgorithmKind.DSGT:
            report = dsgt_report(consensus, alpha)
            noise_order, network_order = dsgt_orders(consensus, alpha)
            report.extra["simple_alpha"] = dsgt_simple_alpha(consensus)
            report.extra["size_independent_stepsize"] = size_independent_stepsize(consensus)
            inputs = consensus
        else:
            report = gsgt_report(gossip, alpha)
            noise_order, network_order = gsgt_orders(gossip, alpha)
            inputs = gossip
        report.costs = costs
        report.extra["order_noise"] = noise_order
        report.extra["order_network"] = network_order
        report.extra["norm"] = cfg.norm.value
        report.extra["sigma2_source"] = setup.sigma2.source
        if policy.kind is StepsizeKind.DIMINISHING:
            _diminishing_extras(report, policy, inputs)
        if cfg.resample_graph:
            report.notes.append("network constants are those of the replica-0 graph")
        reports[alg] = report
        logger.debug("%s theory flags: %s", alg.value, report.flags)
    return reports


def check_feasibility(cfg: ExperimentConfig, reports: dict[AlgorithmKind, TheoryReport]):
    """Warn, or raise when enforcement is on, for stepsizes above the guaranteed range."""
    for alg, report in reports.items():
        if report.alpha <= report.alpha_max:
            continue
        message = f"{alg.value}: alpha={report.alpha:.4g} exceeds alpha_max={report.alpha_max:.4g}"
        if cfg.enforce_feasibility:
            raise ConfigError(message)
        logger.warning("%s; theory bounds do not apply", message)


@dataclass(frozen=True, eq=False)
class ReplicaTask:
    algorithm: AlgorithmKind
    replica: int
    problem: Problem
    network: Network
    policy: StepsizePolicy
    steps: int
    seed: int
    x0: np.ndarray
    record_every: int = 1
    config_hash: str = ""


def run_replica(task: ReplicaTask) -> TrajectoryMetrics:
    """One seeded run; a halted run returns its partial trajectory."""
    recorder = TrajectoryRecorder(
        task.problem.optimum(),
        task.algorithm.value,
        task.seed,
        task.replica,
        task.config_hash,
        task.record_every,
    )
    try:
        return run(
            task.algorithm,
            task.problem,
            task.network,
            task.policy,
            task.steps,
            task.seed,
            recorder=recorder,
            replica=task.replica,
            x0=task.x0,
        )
    except DivergenceError as exc:
        logger.warning("%s replica %d: %s", task.algorithm.value, task.replica, exc)
        return exc.partial


def execute(tasks: list[ReplicaTask], jobs: int = 1, progress: bool = False, desc: str = "replicas") -> list[TrajectoryMetrics]:
    """Run tasks, in order, on up to `jobs` worker processes."""
    if jobs <= 1:
        return [run_replica(t) for t in tqdm(tasks, desc=desc, disable=not progress)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(tqdm(pool.map(run_replica, tasks), total=len(tasks), desc=desc, disable=not progress))


def replica_tasks(cfg: ExperimentConfig, setup: Setup, digest: str) -> list[ReplicaTask]:
    networks: dict[int, Network] = {0: setup.network}
    tasks = []
    for alg in cfg.algorithms:
        for replica in range(cfg.replicas_for(alg)):
            key = replica if cfg.resample_graph else 0
            if key not in networks:
                networks[key] = network_for(cfg, replica)
            tasks.append(
                ReplicaTask(
                    algorithm=alg,
                    replica=replica,
                    problem=setup.problem,
                    network=networks[key],
                    policy=cfg.stepsize_for(alg),
                    steps=cfg.steps_for(alg),
                    seed=cfg.seed,
                    x0=setup.x0,
                    record_every=cfg.record_every,
                    config_hash=digest,
                )
            )
    return tasks


def _tail(summary: EnsembleSummary, metric: str):
    try:
        return summary.tail(metric, TheoryDefaults.TAIL_FRACTION)
    except PreconditionError as exc:
        logger.warning("%s %s tail unavailable: %s", summary.algorithm, metric, exc)
        return None


def _within(tail, bound: float) -> bool:
    margin = TheoryDefaults.BOUND_SE_MARGIN * tail.se if math.isfinite(tail.se) else 0.0
    return tail.value + margin <= bound


def _rate_check(summary: EnsembleSummary, report: TheoryReport) -> dict[str, object]:
    series = summary.means["per_agent_mean_err"]
    nonpositive = np.nonzero(series <= 0)[0]
    stop = int(nonpositive[0]) if nonpositive.size else len(series)
    try:
        fit = fit_linear_rate(series, (stop // 2, stop), k=summary.k)
    except PreconditionError as exc:
        return {"rate_fit_error": str(exc)}
    return {
        "fitted_ratio": fit.ratio,
        "fitted_ratio_low": fit.ratio_low,
        "fitted_ratio_high": fit.ratio_high,
        "rate_within_radius": fit.ratio <= report.spectral_radius + RATE_TOLERANCE,
    }


def compare(
    cfg: ExperimentConfig,
    summaries: dict[AlgorithmKind, EnsembleSummary],
    reports: dict[AlgorithmKind, TheoryReport],
    setup: Setup,
    digest: str,
) -> dict[str, object]:
    """Flat comparison of simulated tails against the theory, plus cost-to-level figures."""
    out: dict[str, object] = {
        "name": cfg.name,
        "config_hash": digest,
        "agents": cfg.agents,
        "sigma2": setup.sigma2.value,
        "sigma2_source": setup.sigma2.source,
    }
    if setup.sigma2.source == "estimate":
        out["sigma2_stderr"] = setup.sigma2.stderr

    tails = {}
    for alg in cfg.algorithms:
        prefix = f"{alg.value}."
        summary = summaries.get(alg)
        if summary is None:
            out[prefix + "diverged"] = True
            continue
        out[prefix + "diverged"] = False
        out[prefix + "replicas"] = summary.replicas
        out[prefix + "halted"] = summary.halted
        out[prefix + "final_per_agent_mean_err"] = float(summary.means["per_agent_mean_err"][-1])
        for metric in ("per_agent_mean_err", "opt_err", "consensus_err"):
            tail = _tail(summary, metric)
            if tail is None:
                continue
            out[f"{prefix}tail_{metric}"] = tail.value
            out[f"{prefix}tail_{metric}_se"] = tail.se
            if metric == "per_agent_mean_err":
                tails[alg] = tail.value
            report = reports.get(alg)
            if report is None or cfg.stepsize_for(alg).kind is not StepsizeKind.CONSTANT:
                continue
            if metric == "opt_err":
                out[prefix + "bound_opt"] = report.limits.opt
                out[prefix + "bound_opt_ok"] = _within(tail, report.limits.opt)
            elif metric == "consensus_err":
                out[prefix + "bound_consensus"] = report.limits.consensus
                out[prefix + "bound_consensus_ok"] = _within(tail, report.limits.consensus)
        if alg.tracks_gradients:
            out[prefix + "max_tracking_deviation"] = summary.max_tracking_deviation
        report = reports.get(alg)
        if report is not None and setup.sigma2.value == 0:
            out[prefix + "spectral_radius"] = report.spectral_radius
            out.update({prefix + key: value for key, value in _rate_check(summary, report).items()})

    if tails:
        level = TheoryDefaults.TARGET_LEVEL_FACTOR * max(tails.values())
        out["target_level"] = level
        for alg, summary in summaries.items():
            prefix = f"{alg.value}."
            out[prefix + "messages_to_level"] = messages_to_reach(summary, level)
            out[prefix + "bound_messages_to_level"] = messages_to_reach(summary, level, exact=False)
            out[prefix + "grad_evals_to_level"] = grad_evals_to_reach(summary, level)
    return out


@dataclass
class ArtifactBundle:
    config: ExperimentConfig
    output: Path
    runs: dict[AlgorithmKind, list[TrajectoryMetrics]]
    summaries: dict[AlgorithmKind, EnsembleSummary]
    reports: dict[AlgorithmKind, TheoryReport]
    summary: dict[str, object]
    diverged: list[AlgorithmKind] = field(default_factory=list)


def flat_theory(reports: dict[AlgorithmKind, TheoryReport]) -> dict[str, object]:
    out = {}
    for alg, report in reports.items():
        out.update({f"{alg.value}.{key}": value for key, value in report.flat().items()})
    return out


def write_bundle(bundle: ArtifactBundle, setup: Setup):
    cfg, root = bundle.config, bundle.output
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.cfg").write_text(render_config(cfg))
    reporter.write_flat(root / "theory.txt", flat_theory(bundle.reports))
    reporter.write_json(root / "theory.json", {alg.value: r.flat() for alg, r in bundle.reports.items()})
    digest = bundle.summary["config_hash"]
    for alg, runs in bundle.runs.items():
        directory = root / alg.value
        directory.mkdir(exist_ok=True)
        for trajectory in runs:
            reporter.write_run(directory, trajectory)
        summary = bundle.summaries.get(alg)
        if summary is None:
            continue
        meta = reporter.ensemble_meta(summary, cfg.seed, digest)
        reporter.write_ensemble(directory, summary, meta)
        reporter.write_projection(directory, summary, alg, setup.problem.n, meta)
    reporter.write_flat(root / "summary.txt", bundle.summary)
    reporter.write_json(root / "summary.json", bundle.summary)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, progress: bool = False, write: bool = True) -> ArtifactBundle:
    """Seeded ensembles for every algorithm in cfg, compared against the theory.

    Halted replicas are kept in the per-run files and excluded from the
    ensembles; an algorithm whose replicas all halted is listed in
    `diverged` instead of raising.

    Raises:
        ConfigError: infeasible stepsize with enforcement on
        ConnectivityError, MixingValidationError: the network cannot be built
    """
    logger.info("experiment '%s': %s on %s, n=%d", cfg.name, ",".join(a.value for a in cfg.algorithms), cfg.topology.render(), cfg.agents)
    digest = config_hash(cfg)
    setup = build_setup(cfg)
    reports = theory_reports(cfg, setup)
    check_feasibility(cfg, reports)

    tasks = replica_tasks(cfg, setup, digest)
    results = execute(tasks, jobs, progress, desc=cfg.name)
    runs: dict[AlgorithmKind, list[TrajectoryMetrics]] = {alg: [] for alg in cfg.algorithms}
    for task, trajectory in zip(tasks, results):
        runs[task.algorithm].append(trajectory)

    summaries, diverged = {}, []
    for alg, alg_runs in runs.items():
        try:
            summaries[alg] = aggregate(alg_runs)
        except AllReplicasDivergedError:
            logger.error("%s: every replica diverged", alg.value)
            diverged.append(alg)
            continue
        logger.info("%s: %d replicas aggregated", alg.value, summaries[alg].replicas)

    bundle = ArtifactBundle(
        config=cfg,
        output=Path(cfg.output),
        runs=runs,
        summaries=summaries,
        reports=reports,
        summary=compare(cfg, summaries, reports, setup, digest),
        diverged=diverged,
    )
    if write:
        write_bundle(bundle, setup)
    logger.info("experiment '%s' finished", cfg.name)
    return bundle


def sweep_configs(cfg: ExperimentConfig, key: str, values: tuple[str, ...]) -> list[ExperimentConfig]:
    """One config per value, each writing to `<output>/<key>=<value>`."""
    configs = []
    for value in values:
        point = with_override(cfg, key, value)
        configs.append(replace(point, output=str(Path(cfg.output) / f"{key}={value}")))
    return configs


def run_sweep(cfg: ExperimentConfig, key: str, values: tuple[str, ...], jobs: int = 1, progress: bool = False) -> list[ArtifactBundle]:
    return [run_experiment(point, jobs, progress) for point in sweep_configs(cfg, key, values)]


def run_config(cfg: ExperimentConfig, jobs: int = 1, progress: bool = False) -> list[ArtifactBundle]:
    """Run cfg, expanding its `sweep` entry when present."""
    if cfg.sweep is None:
        return [run_experiment(cfg, jobs, progress)]
    key, values = cfg.sweep
    return run_sweep(cfg, key, values, jobs, progress)


def fig1_configs(scale: float = 1.0, output: str | None = None, config_dir: Path | None = None) -> list[ExperimentConfig]:
    config_dir = config_dir or Fig1Defaults.CONFIG_DIR
    configs = []
    for name in Fig1Defaults.CONFIGS:
        cfg = scaled(load_config(config_dir / name), scale)
        if output is not None:
            cfg = replace(cfg, output=str(Path(output) / cfg.name))
        configs.append(cfg)
    return configs


def run_fig1(scale: float = 1.0, output: str | None = None, jobs: int = 1, progress: bool = False) -> list[ArtifactBundle]:
    bundles = []
    for cfg in fig1_configs(scale, output):
        bundles += run_config(cfg, jobs, progress)
    return bundles


def theory_only(cfg: ExperimentConfig) -> dict[AlgorithmKind, TheoryReport]:
    setup = build_setup(cfg)
    reports = theory_reports(cfg, setup)
    check_feasibility(cfg, reports)
    return reports
