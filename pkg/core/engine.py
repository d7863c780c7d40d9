import logging

import numpy as np

from components.base_algorithm import Algorithm
from components.base_problem import Problem
from components.csg import CSG
from components.dsg import DSG
from components.dsgt import DSGT
from components.enums import AlgorithmKind
from components.gsgt import GSGT
from core.errors import DivergenceError
from core.metrics import TrajectoryMetrics, TrajectoryRecorder
from core.mixing import Network
from core.state import StepsizePolicy, init_state, stepsize_at
from core.streams import StreamBank

logger = logging.getLogger(__name__)

# per-agent error above this multiple of its starting value halts the run
BLOWUP_FACTOR = 1e12
# reference error when a run starts exactly at the optimum
BLOWUP_FLOOR = 1.0

ALGORITHMS: dict[AlgorithmKind, type[Algorithm]] = {
    AlgorithmKind.DSGT: DSGT,
    AlgorithmKind.GSGT: GSGT,
    AlgorithmKind.DSG: DSG,
    AlgorithmKind.CSG: CSG,
}


def make_algorithm(kind: AlgorithmKind, problem: Problem, network: Network) -> Algorithm:
    return ALGORITHMS[kind](problem, network)


def run(
    alg: AlgorithmKind,
    pr: Problem,
    net: Network,
    policy: StepsizePolicy,
    steps: int,
    seed: int,
    recorder: TrajectoryRecorder | None = None,
    replica: int = 0,
    x0: np.ndarray | None = None,
) -> TrajectoryMetrics:
    """Execute one seeded run.

    Args:
        alg: Algorithm to run
        pr: Problem
        net: Network, already validated
        policy: Stepsize policy
        steps: Number of iterations, 0 records only k = 0
        seed: Master seed
        recorder: Row collector, a stride-1 recorder when omitted
        replica: Replica index, selects the random streams
        x0: Initial iterates, zeros when omitted

    Returns:
        The recorded trajectory

    Raises:
        DivergenceError: non-finite iterate or blow-up, carrying k and the partial trajectory
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    x_star = pr.optimum()
    if x0 is None:
        x0 = np.zeros((pr.n, pr.p))
    if alg is AlgorithmKind.CSG:
        x0 = np.tile(np.asarray(x0, dtype=float)[0], (pr.n, 1))
    if recorder is None:
        recorder = TrajectoryRecorder(x_star, alg.value, seed, replica)

    bank = StreamBank(seed, replica, pr.n)
    algorithm = make_algorithm(alg, pr, net)
    state = init_state(pr, x0, bank, tracker=alg.tracks_gradients)
    recorder.observe(state)
    recorder.track(state)
    initial = recorder.initial_error
    limit = BLOWUP_FACTOR * (initial if initial > 0 else BLOWUP_FLOOR)

    for _ in range(steps):
        algorithm.step(state, stepsize_at(policy, state.k), bank)
        state.k += 1
        if not np.all(np.isfinite(state.X)):
            raise DivergenceError(state.k, "non-finite iterate", recorder.finish(state.k, "non-finite iterate"))
        error = recorder.track(state)
        if error > limit:
            recorder.observe(state)
            reason = f"error {error:.3e} exceeds {limit:.3e}"
            raise DivergenceError(state.k, reason, recorder.finish(state.k, reason))
        if recorder.wants(state.k, state.k == steps):
            recorder.observe(state)

    logger.debug("%s replica %d finished %d steps", alg.value, replica, steps)
    return recorder.finish()
