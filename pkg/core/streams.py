import numpy as np

BLOCK_SIZE = 256


class Channel:
    UNIFORM = 0
    NORMAL = 1
    EVENTS = 2
    PROBLEM = 3
    SIGMA_POINTS = 4


class _AgentBlocks:
    """Per-agent draw buffers for one channel.

    Every agent owns a Philox generator keyed by (seed, replica, agent, channel).
    Draws are taken row by row from pre-filled blocks, so the d-th row handed to
    an agent does not depend on how requests are batched across agents.
    """

    def __init__(self, seed: int, replica: int, n: int, channel: int, width: int):
        self.width = width
        self.channel = channel
        self.generators = [
            np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replica, agent, channel])))
            for agent in range(n)
        ]
        self.buffer = np.empty((n, BLOCK_SIZE, width))
        self.cursor = np.full(n, BLOCK_SIZE)
        self.drawn = np.zeros(n, dtype=np.int64)

    def _refill(self, agent: int):
        gen = self.generators[agent]
        if self.channel == Channel.NORMAL:
            self.buffer[agent] = gen.standard_normal((BLOCK_SIZE, self.width))
        else:
            self.buffer[agent] = gen.random((BLOCK_SIZE, self.width))
        self.cursor[agent] = 0

    def take(self, agents: np.ndarray) -> np.ndarray:
        """One row per requested agent. Agents must be distinct within a call."""
        for agent in agents[self.cursor[agents] >= BLOCK_SIZE]:
            self._refill(agent)
        rows = self.buffer[agents, self.cursor[agents]]
        self.cursor[agents] += 1
        self.drawn[agents] += 1
        return rows


class StreamBank:
    """Counter-based random streams for one run.

    Args:
        seed: Master seed
        replica: Monte-Carlo replica index
        n: Number of agents
    """

    def __init__(self, seed: int, replica: int, n: int):
        if seed < 0 or replica < 0:
            raise ValueError("seed and replica must be nonnegative")
        self.seed = seed
        self.replica = replica
        self.n = n
        self._channels: dict[int, _AgentBlocks] = {}
        self._events = None

    def _channel(self, channel: int, width: int) -> _AgentBlocks:
        blocks = self._channels.get(channel)
        if blocks is None:
            blocks = _AgentBlocks(self.seed, self.replica, self.n, channel, width)
            self._channels[channel] = blocks
        elif blocks.width != width:
            raise ValueError(f"channel {channel} was opened with width {blocks.width}, not {width}")
        return blocks

    def uniform(self, agents: np.ndarray, width: int) -> np.ndarray:
        return self._channel(Channel.UNIFORM, width).take(agents)

    def normal(self, agents: np.ndarray, width: int) -> np.ndarray:
        return self._channel(Channel.NORMAL, width).take(agents)

    def draws(self, agent: int) -> int:
        """Total rows consumed by an agent across channels."""
        return int(sum(blocks.drawn[agent] for blocks in self._channels.values()))

    def event_uniforms(self) -> tuple[float, float]:
        """Two uniforms from the gossip-event stream."""
        if self._events is None:
            self._events = _AgentBlocks(self.seed, self.replica, 1, Channel.EVENTS, 2)
        u = self._events.take(np.zeros(1, dtype=int))[0]
        return float(u[0]), float(u[1])


def generator(seed: int, *key: int) -> np.random.Generator:
    """Stand-alone Philox generator for draws outside a run (problem data, sigma estimation)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))
