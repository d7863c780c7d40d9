import numpy as np

from components.base_algorithm import Algorithm
from components.base_problem import Problem
from components.enums import AlgorithmKind
from core.mixing import MixingMatrix
from core.state import AlgorithmState, GossipEvent
from core.streams import StreamBank


def draw_gossip_event(pi: MixingMatrix, bank: StreamBank) -> GossipEvent:
    """Agent i wakes with probability 1/n and picks j from row i of Pi, itself included."""
    u_wake, u_partner = bank.event_uniforms()
    n = pi.n
    i = min(int(u_wake * n), n - 1)
    j = int(np.searchsorted(pi.cumulative_rows[i], u_partner, side="right"))
    return GossipEvent(i, min(j, n - 1))


def gsgt_step(
    s: AlgorithmState,
    pi: MixingMatrix,
    alpha: float,
    pr: Problem,
    bank: StreamBank,
) -> tuple[AlgorithmState, GossipEvent]:
    """One gossip gradient tracking iteration, in place.

    On an exchange both agents average their pair and step along their own
    tracker; on a self-update the waking agent steps with 2*alpha. All other
    rows stay untouched.
    """
    event = draw_gossip_event(pi, bank)
    i, j = event.i, event.j
    if event.exchanged:
        rows = np.array([i, j])
        x_mid = (s.X[i] + s.X[j]) / 2.0
        y_mid = (s.Y[i] + s.Y[j]) / 2.0
        s.X[rows] = x_mid - alpha * s.Y[rows]
        g = pr.sample_gradients(rows, s.X[rows], bank)
        s.Y[rows] = y_mid + g - s.G_last[rows]
        s.G_last[rows] = g
        s.grad_evals += 2
        s.messages += 2
        s.vectors_sent += 4
        s.exchanges += 1
    else:
        rows = np.array([i])
        s.X[i] = s.X[i] - 2.0 * alpha * s.Y[i]
        g = pr.sample_gradients(rows, s.X[rows], bank)
        s.Y[i] = s.Y[i] + g[0] - s.G_last[i]
        s.G_last[i] = g[0]
        s.grad_evals += 1
    s.bound_messages += 2
    return s, event


class GSGT(Algorithm):
    kind = AlgorithmKind.GSGT

    def __init__(self, problem, network):
        super().__init__(problem, network)
        self.last_event: GossipEvent | None = None

    def step(self, state, alpha, bank):
        state, self.last_event = gsgt_step(state, self.network.gossip, alpha, self.problem, bank)
        return state
