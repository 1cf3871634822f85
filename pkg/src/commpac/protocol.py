"""The learner/agent loop: agents act greedily on fused tables, the learner ingests,
re-plans and re-broadcasts only when a sample set changed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .channels import (
    AGENT_TO_AGENT,
    LEARNER_TO_AGENT,
    REWARD,
    ChannelSpec,
    CommGraph,
    corrupt_q,
    corrupt_reward,
    relay_q,
)
from .mdp import greedy_policy
from .sampling import BellmanConfig, Sample, SampleTable, value_iteration
from .weighting import (
    NoiseEstimate,
    WeightVector,
    adaptive_weight_update,
    fuse,
    optimal_additive_weights,
    quantization_weights,
)

SCHEMES = ("learner_only", "uniform", "optimal", "optimal_quantization", "adaptive")


class TraceRecord(NamedTuple):
    step: int
    agent_id: int
    state: int
    action: int
    reward: float
    broadcast_flag: bool
    vi_sweeps: int
    policy: np.ndarray  # committed greedy policy the action was taken under


@dataclass
class Channels:
    """Per-link channel parameters.

    ``learner[i]`` is the learner -> agent i link, ``links[(j, i)]`` the
    agent j -> agent i link and ``reward[i]`` agent i's reward link.
    """

    learner: list
    links: dict
    reward: list

    @classmethod
    def identical(
        cls,
        graph: CommGraph,
        sigma_l: float = 0.0,
        sigma_a: float = 0.0,
        sigma_r: float = 0.0,
        delta_q_l: float = 0.0,
        delta_q_a: float = 0.0,
    ) -> Channels:
        n = graph.num_agents
        learner = [ChannelSpec(sigma_l, delta_q_l, LEARNER_TO_AGENT) for _ in range(n)]
        links = {
            (j, i): ChannelSpec(sigma_a, delta_q_a, AGENT_TO_AGENT)
            for i in range(n)
            for j in graph.neighbors(i)
        }
        reward = [ChannelSpec(sigma_r, 0.0, REWARD) for _ in range(n)]
        return cls(learner, links, reward)


class FusionScheme:
    """Static per-agent weights fixed before exploration starts."""

    def __init__(self, name: str, weights: list):
        self.name = name
        self._weights = weights

    def weights(self, agent_id, q, q_learner, q_neighbors) -> WeightVector:
        return self._weights[agent_id]


class AdaptiveScheme(FusionScheme):
    """Weights re-estimated at every broadcast from the observed channel residuals."""

    def __init__(self, n_agents: int, degree_corrected: bool = False):
        self.name = "adaptive"
        self.degree_corrected = degree_corrected
        self.estimates = [NoiseEstimate() for _ in range(n_agents)]

    def weights(self, agent_id, q, q_learner, q_neighbors) -> WeightVector:
        est, w = adaptive_weight_update(
            self.estimates[agent_id], q, q_learner, q_neighbors, self.degree_corrected
        )
        self.estimates[agent_id] = est
        return w


def make_scheme(
    name: str,
    graph: CommGraph,
    channels: Channels,
    f: float | None = None,
    degree_corrected: bool = False,
) -> FusionScheme:
    if name not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    if name == "adaptive":
        return AdaptiveScheme(graph.num_agents, degree_corrected)
    weights = []
    for i in range(graph.num_agents):
        nbrs = graph.neighbors(i)
        d = len(nbrs)
        sigma_l = channels.learner[i].sigma
        if name == "learner_only" or (sigma_l == 0 and name != "uniform"):
            w = WeightVector.learner_only(d)
        elif name == "uniform":
            w = WeightVector.uniform(d)
        elif name == "optimal":
            w = optimal_additive_weights(
                sigma_l,
                [channels.links[(j, i)].sigma for j in nbrs],
                [channels.learner[j].sigma for j in nbrs],
            )
        else:
            if f is None:
                raise ValueError("optimal_quantization needs the PAC factor f")
            w = quantization_weights(sigma_l, channels.learner[i].delta_q, d, f)
        weights.append(w)
    return FusionScheme(name, weights)


@dataclass
class AgentState:
    id: int
    current_state: int
    fused_q: np.ndarray
    policy: np.ndarray


@dataclass
class LearnerState:
    q: np.ndarray
    sample_sets: SampleTable
    inbox: list = field(default_factory=list)
    update_flag: bool = True


@dataclass
class SystemState:
    env: object
    learner: LearnerState
    agents: list
    graph: CommGraph
    channels: Channels
    scheme: FusionScheme
    cfg: BellmanConfig
    rng_agents: np.random.Generator
    rng_channels: np.random.Generator
    time: int = 0
    broadcasts: int = 0
    last_broadcast: bool = False
    last_sweeps: int = 0


def make_system(
    env,
    graph: CommGraph,
    channels: Channels,
    scheme: FusionScheme,
    cfg: BellmanConfig,
    k: int,
    k_m: int,
    seed=0,
) -> SystemState:
    """Fresh system: Q = Q_max everywhere, agents placed uniformly, initial broadcast done."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng_agents, rng_channels = (np.random.default_rng(s) for s in ss.spawn(2))
    s_count, a_count = env.num_states, env.num_actions
    q = np.full((s_count, a_count), cfg.q_max)
    learner = LearnerState(q, SampleTable(s_count, a_count, k, k_m, cfg.mode))
    agents = [
        AgentState(i, int(rng_agents.integers(s_count)), q.copy(), greedy_policy(q))
        for i in range(graph.num_agents)
    ]
    sys = SystemState(env, learner, agents, graph, channels, scheme, cfg, rng_agents, rng_channels)
    broadcast(sys, rng_channels)
    return sys


def broadcast(sys: SystemState, rng: np.random.Generator | None = None) -> SystemState:
    """Send noisy copies of the learner's Q to every agent and fuse them."""
    rng = sys.rng_channels if rng is None else rng
    q = sys.learner.q
    q_max = sys.cfg.q_max
    copies = [corrupt_q(q, spec, rng) for spec in sys.channels.learner]
    for agent in sys.agents:
        i = agent.id
        relays = [relay_q(copies[j], sys.channels.links[(j, i)], rng) for j in sys.graph.neighbors(i)]
        w = sys.scheme.weights(i, q, copies[i], relays)
        agent.fused_q = fuse(copies[i], relays, w, q_max)
        agent.policy = greedy_policy(agent.fused_q)
    sys.learner.update_flag = False
    sys.broadcasts += 1
    return sys


def agent_step(sys: SystemState, agent_id: int, rng: np.random.Generator | None = None):
    """Greedy step on the agent's committed table; the noisy sample goes to the learner's inbox."""
    rng = sys.rng_agents if rng is None else rng
    agent = sys.agents[agent_id]
    s = agent.current_state
    a = int(agent.policy[s])
    s_next, r = sys.env.step(s, a, rng)
    r_noisy = corrupt_reward(r, sys.channels.reward[agent_id], rng)
    sample = Sample(s, a, r_noisy, s_next, agent_id, sys.time)
    sys.learner.inbox.append(sample)
    if sys.env.is_restart(s_next):
        s_next = int(rng.integers(sys.env.num_states))
    agent.current_state = s_next
    return sys, sample, r


def learner_step(sys: SystemState, rng: np.random.Generator | None = None) -> SystemState:
    learner = sys.learner
    changed = False
    for sample in learner.inbox:
        if learner.sample_sets.ingest(sample, sys.cfg.mode):
            changed = True
    learner.inbox.clear()
    sys.last_broadcast = changed
    sys.last_sweeps = 0
    if changed:
        learner.update_flag = True
        learner.q, sys.last_sweeps = value_iteration(learner.q, learner.sample_sets, sys.cfg)
        broadcast(sys, rng)
    sys.time += 1
    return sys


def run_steps(sys: SystemState, num_steps: int, record: bool = True):
    """Advance every agent then the learner, ``num_steps`` times.

    Returns the system and, per tick and agent, a TraceRecord with the true
    reward and whether that tick ended in a broadcast.
    """
    if num_steps < 0:
        raise ValueError("num_steps must be non-negative")
    trace = []
    for _ in range(num_steps):
        step = sys.time
        moves = []
        for agent in sys.agents:
            s, policy = agent.current_state, agent.policy
            _, sample, r = agent_step(sys, agent.id)
            moves.append((agent.id, s, sample.action, r, policy))
        learner_step(sys)
        if record:
            for agent_id, s, a, r, policy in moves:
                trace.append(
                    TraceRecord(step, agent_id, s, a, r, sys.last_broadcast, sys.last_sweeps, policy)
                )
    return sys, trace
