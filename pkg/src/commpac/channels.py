"""Noisy links between the learner and the agents, and the agent communication graph.

Additive noise is Gaussian with standard deviation ``sigma``; quantization is
uniform on ``[-delta_q, delta_q]``. Draws depend only on the table shape and
the generator, never on the values being corrupted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEARNER_TO_AGENT = "learner_to_agent"
AGENT_TO_AGENT = "agent_to_agent"
REWARD = "reward"
KINDS = (LEARNER_TO_AGENT, AGENT_TO_AGENT, REWARD)


@dataclass(frozen=True)
class ChannelSpec:
    sigma: float = 0.0
    delta_q: float = 0.0
    kind: str = LEARNER_TO_AGENT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.sigma < 0 or self.delta_q < 0:
            raise ValueError("sigma and delta_q must be non-negative")
        if self.kind == REWARD and self.delta_q != 0:
            raise ValueError("reward channels carry additive noise only")

    @property
    def variance(self) -> float:
        return self.sigma**2


def draw_noise(shape, spec: ChannelSpec, rng: np.random.Generator) -> np.ndarray:
    # Both draws are always taken so the stream position does not depend on the parameters.
    return rng.normal(0.0, spec.sigma, shape) + rng.uniform(-spec.delta_q, spec.delta_q, shape)


def corrupt_q(q: np.ndarray, spec: ChannelSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == REWARD:
        raise ValueError("corrupt_q needs a Q-table channel")
    return q + draw_noise(q.shape, spec, rng)


def corrupt_reward(r: float, spec: ChannelSpec, rng: np.random.Generator) -> float:
    if spec.kind != REWARD:
        raise ValueError("corrupt_reward needs a reward channel")
    return r + rng.normal(0.0, spec.sigma)


def relay_q(q_received: np.ndarray, spec: ChannelSpec, rng: np.random.Generator) -> np.ndarray:
    """Forward agent j's learner copy to a neighbour, adding the agent-agent noise."""
    if spec.kind != AGENT_TO_AGENT:
        raise ValueError("relay_q needs an agent_to_agent channel")
    return q_received + draw_noise(q_received.shape, spec, rng)


class CommGraph:
    """Undirected 0-1 communication graph between agents."""

    def __init__(self, adjacency):
        adj = np.asarray(adjacency, dtype=np.int64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any((adj != 0) & (adj != 1)):
            raise ValueError("adjacency must be 0-1")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency must have a zero diagonal")
        if np.any(adj != adj.T):
            raise ValueError("adjacency must be symmetric")
        self.adjacency = adj
        self.degrees = adj.sum(axis=1)
        self._neighbors = [tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(len(adj))]

    @property
    def num_agents(self) -> int:
        return len(self.adjacency)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def degree(self, i: int) -> int:
        return int(self.degrees[i])

    def is_regular(self) -> bool:
        return bool(np.all(self.degrees == self.degrees[0]))

    @classmethod
    def full(cls, n: int) -> CommGraph:
        return cls(np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64))

    @classmethod
    def empty(cls, n: int) -> CommGraph:
        return cls(np.zeros((n, n), dtype=np.int64))

    @classmethod
    def regular(cls, n: int, d: int) -> CommGraph:
        """Circulant d-regular graph: each agent links to its d nearest ring neighbours."""
        if not 0 <= d < n or (n * d) % 2:
            raise ValueError(f"no {d}-regular graph on {n} vertices")
        adj = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            for off in range(1, d // 2 + 1):
                adj[i, (i + off) % n] = adj[(i + off) % n, i] = 1
            if d % 2:
                adj[i, (i + n // 2) % n] = 1
        return cls(adj)

    @classmethod
    def from_edges(cls, n: int, edges) -> CommGraph:
        adj = np.zeros((n, n), dtype=np.int64)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop on agent {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) outside agents 0..{n - 1}")
            adj[i, j] = adj[j, i] = 1
        return cls(adj)
