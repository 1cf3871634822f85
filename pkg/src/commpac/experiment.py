"""Seeded replications of the grid-world experiment, aggregation and plot-data output."""

from __future__ import annotations

import csv
import functools
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import PacParams, compute_eps_eff, compute_f, empirical_tce, pac_report
from .config import ExperimentConfig
from .mdp import GridWorld, bellman_variance, exact_value_iteration, greedy_policy
from .protocol import Channels, make_scheme, make_system, run_steps
from .sampling import BellmanConfig
from .weighting import (
    WeightVector,
    fused_variance,
    optimal_additive_weights,
    quantization_bound,
)

log = logging.getLogger(__name__)

CSV_HEADER = ("episode", "mean_reward", "std_reward", "oracle_mean")


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    mean_reward: float
    std_reward: float
    oracle_mean: float


@dataclass
class ReplicationResult:
    index: int
    rewards: np.ndarray  # (episodes, agents) accumulated true reward
    oracle: np.ndarray  # (episodes,) oracle agent reward, NaN when disabled
    broadcasts: int
    tce: float | None = None


@functools.lru_cache(maxsize=16)
def _grid_solution(side: int, wrap: bool, gamma: float):
    grid = GridWorld(side, wrap, gamma)
    mdp = grid.to_mdp()
    return grid, mdp, exact_value_iteration(mdp, 1e-10)


def grid_solution(cfg: ExperimentConfig):
    """(GridWorld, its Mdp, exact Q*) for the configured grid."""
    return _grid_solution(cfg.side, cfg.wrap, cfg.gamma)


def channels_for(cfg: ExperimentConfig, graph) -> Channels:
    return Channels.identical(
        graph,
        math.sqrt(cfg.sigma_l2),
        math.sqrt(cfg.sigma_a2),
        cfg.sigma_r,
        cfg.delta_q_l,
        cfg.delta_q_a,
    )


def pac_params(cfg: ExperimentConfig) -> PacParams:
    """Bound-calculator inputs for a config, with per-agent sigma_c and dQ_c from its scheme."""
    grid, mdp, q_star = grid_solution(cfg)
    if cfg.sigma_bellman is None:
        sigma = math.sqrt(bellman_variance(mdp, q_star))
    else:
        sigma = cfg.sigma_bellman
    p = PacParams(
        n_agents=cfg.agents, num_states=grid.num_states, num_actions=grid.num_actions,
        gamma=cfg.gamma, delta=cfg.delta, k=cfg.k, k_m=cfg.k_m, q_max=grid.q_max,
        eps_a=cfg.eps_a, eps_s=cfg.eps_s, sigma=sigma, sigma_r=cfg.sigma_r,
    )
    graph = cfg.make_graph()
    weights = scheme_weights(cfg, graph, compute_f(p))
    sl, sa = math.sqrt(cfg.sigma_l2), math.sqrt(cfg.sigma_a2)
    sigma_c, dq_c = [], []
    for i, w in enumerate(weights):
        d = graph.degree(i)
        sigma_c.append(math.sqrt(fused_variance(w, sl, [sa] * d)))
        dq_c.append(quantization_bound(w, cfg.delta_q_l, [cfg.delta_q_l] * d, [cfg.delta_q_a] * d))
    p.sigma_c, p.delta_q_c = sigma_c, dq_c
    return p


def scheme_weights(cfg: ExperimentConfig, graph, f: float) -> list:
    """Static weights per agent; the adaptive scheme is represented by its optimal target."""
    name = "optimal" if cfg.scheme == "adaptive" else cfg.scheme
    if cfg.sigma_l2 == 0 and name in ("optimal", "optimal_quantization"):
        return [WeightVector.learner_only(graph.degree(i)) for i in range(graph.num_agents)]
    return make_scheme(name, graph, channels_for(cfg, graph), f=f)._weights


def pac_report_for(cfg: ExperimentConfig):
    return pac_report(pac_params(cfg))


def build_system(cfg: ExperimentConfig, seed):
    grid, _, _ = grid_solution(cfg)
    graph = cfg.make_graph()
    channels = channels_for(cfg, graph)
    f = None
    if cfg.scheme == "optimal_quantization":
        f = compute_f(pac_params(cfg))
    scheme = make_scheme(cfg.scheme, graph, channels, f=f, degree_corrected=cfg.degree_corrected)
    bellman = BellmanConfig(cfg.gamma, grid.q_max, cfg.eps_b, cfg.eps_a, cfg.max_sweeps, cfg.mode)
    return make_system(grid, graph, channels, scheme, bellman, cfg.k, cfg.k_m, seed=seed)


def run_replication(cfg: ExperimentConfig, index: int, with_tce: bool = False) -> ReplicationResult:
    """One independent run with seed ``base_seed + index``.

    Agents (and the oracle agent) are re-placed uniformly at every episode
    start; the learner keeps its samples and Q across episodes.
    """
    grid, mdp, q_star = grid_solution(cfg)
    sys_seed, oracle_seed = np.random.SeedSequence(cfg.base_seed + index).spawn(2)
    sys = build_system(cfg, sys_seed)
    oracle_rng = np.random.default_rng(oracle_seed)
    oracle_policy = greedy_policy(q_star)
    n = cfg.agents
    rewards = np.zeros((cfg.episodes, n))
    oracle = np.full(cfg.episodes, np.nan)
    full_trace = []
    for ep in range(cfg.episodes):
        for agent in sys.agents:
            agent.current_state = int(sys.rng_agents.integers(grid.num_states))
        sys, trace = run_steps(sys, cfg.steps_per_episode)
        for rec in trace:
            rewards[ep, rec.agent_id] += rec.reward
        if with_tce:
            full_trace.extend(trace)
        if cfg.include_oracle_agent:
            oracle[ep] = _oracle_episode(grid, oracle_policy, oracle_rng, cfg.steps_per_episode)
    tce = None
    if with_tce:
        eps = compute_eps_eff(pac_params(cfg), compute_f(pac_params(cfg)))
        tce = sum(
            empirical_tce([r for r in full_trace if r.agent_id == i], mdp, q_star, float(eps[i]))
            for i in range(n)
        )
    return ReplicationResult(index, rewards, oracle, sys.broadcasts, tce)


def _oracle_episode(grid: GridWorld, policy: np.ndarray, rng, steps: int) -> float:
    s = int(rng.integers(grid.num_states))
    total = 0.0
    for _ in range(steps):
        s, r = grid.step(s, int(policy[s]))
        total += r
        if grid.is_restart(s):
            s = int(rng.integers(grid.num_states))
    return total


def run_replications(cfg: ExperimentConfig, with_tce: bool = False) -> list:
    indices = range(cfg.replications)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(
                pool.map(functools.partial(run_replication, cfg, with_tce=with_tce), indices)
            )
    else:
        results = [run_replication(cfg, i, with_tce) for i in indices]
    return sorted(results, key=lambda r: r.index)


def aggregate(results: list) -> list:
    rewards = np.stack([r.rewards for r in results])  # (R, episodes, agents)
    oracle = np.stack([r.oracle for r in results])
    metrics = []
    for ep in range(rewards.shape[1]):
        values = rewards[:, ep, :].ravel()
        col = oracle[:, ep]
        oracle_mean = float(col.mean()) if not np.isnan(col).any() else float("nan")
        metrics.append(EpisodeMetrics(ep + 1, float(values.mean()), float(values.std()), oracle_mean))
    return metrics


def run_experiment(cfg: ExperimentConfig) -> list:
    return aggregate(run_replications(cfg))


def final_episode_rewards(results: list) -> np.ndarray:
    """All (replication, agent) accumulated rewards of the last episode."""
    return np.concatenate([r.rewards[-1] for r in results])


def metrics_csv_text(metrics: list) -> str:
    if not metrics:
        raise ValueError("no metrics to write")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for m in sorted(metrics, key=lambda m: m.episode):
        writer.writerow(
            [m.episode, f"{m.mean_reward:.10g}", f"{m.std_reward:.10g}", f"{m.oracle_mean:.10g}"]
        )
    return buf.getvalue()


def emit_csv(metrics: list, path) -> None:
    text = metrics_csv_text(metrics)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write metrics CSV {path}: {exc.strerror}") from exc


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            EpisodeMetrics(int(row["episode"]), float(row["mean_reward"]),
                           float(row["std_reward"]), float(row["oracle_mean"]))
            for row in reader
        ]


SURFACE_HEADER = ("n_a", "ratio_a1", "ratio_a2", "w_self", "w_group1", "w_group2", "w_ratio")


def weight_surface(ratios_a1, ratios_a2, n_a_values=(1,), sigma_l: float = 1.0) -> list:
    """Optimal weights for a fully connected two-group layout.

    The focal agent hears from ``n_a`` agents whose relay noise variance is
    ``ratio_a1 * sigma_l^2`` and ``n_a`` agents at ``ratio_a2 * sigma_l^2``;
    ``n_a = 1`` is the three-agent case.
    """
    rows = []
    for n_a in n_a_values:
        for r1 in ratios_a1:
            for r2 in ratios_a2:
                sigma_a = [sigma_l * math.sqrt(r1)] * n_a + [sigma_l * math.sqrt(r2)] * n_a
                w = optimal_additive_weights(sigma_l, sigma_a)
                w1, w2 = w.neighbor_weights[0], w.neighbor_weights[n_a]
                rows.append((n_a, r1, r2, w.self_weight, w1, w2, w1 / w2))
    return rows


def monitor_tce(cfg: ExperimentConfig) -> tuple[list, float]:
    """Empirical TCE per replication next to the explicit bound (monitored, not asserted)."""
    results = run_replications(cfg, with_tce=True)
    bound = pac_report_for(cfg).tce_bound
    tces = [r.tce for r in results]
    exceed = sum(t > bound for t in tces)
    log.info("TCE monitor: max empirical %.4g, bound %.4g, %d/%d replications above bound",
             max(tces), bound, exceed, len(tces))
    return tces, bound
