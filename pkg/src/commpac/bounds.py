"""Closed-form PAC quantities: f, k_m, eps_b, eps_eff, T_H and the explicit TCE bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .mdp import Mdp, policy_evaluation


@dataclass
class PacParams:
    """Inputs of the bound calculator.

    ``sigma`` bounds the Bellman-operator standard deviation; ``sigma_c`` and
    ``delta_q_c`` hold one effective additive scale / quantization bound per agent.
    """

    n_agents: int
    num_states: int
    num_actions: int
    gamma: float
    delta: float
    k: int
    k_m: int
    q_max: float
    eps_a: float = 1e-7
    eps_s: float = 1.0
    sigma: float = 0.0
    sigma_r: float = 0.0
    sigma_c: list = field(default_factory=list)
    delta_q_c: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_agents < 1 or self.num_states < 1 or self.num_actions < 1:
            raise ValueError("agent, state and action counts must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.k_m < 1 or self.k < self.k_m:
            raise ValueError("need 1 <= k_m <= k")
        if not self.sigma_c:
            self.sigma_c = [0.0] * self.n_agents
        if not self.delta_q_c:
            self.delta_q_c = [0.0] * self.n_agents
        if len(self.sigma_c) != self.n_agents or len(self.delta_q_c) != self.n_agents:
            raise ValueError("sigma_c and delta_q_c need one entry per agent")

    @property
    def sa(self) -> int:
        return self.num_states * self.num_actions

    @property
    def ladder_rungs(self) -> int:
        """ceil(1 + log2(k / k_m)), the number of distinct sample-set sizes."""
        return math.ceil(1 + math.log2(self.k / self.k_m))


@dataclass
class PacReport:
    f_value: float
    eps_b: float
    k_min: int
    eps_eff: list
    tce_bound: float
    t_h: int
    km_suggested: int

    def as_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, list):
                for i, v in enumerate(value):
                    lines.append(f"{key}[{i}]={v:.10g}")
            elif isinstance(value, float):
                lines.append(f"{key}={value:.10g}")
            else:
                lines.append(f"{key}={value}")
        return "\n".join(lines)


def compute_f(p: PacParams) -> float:
    if not 0.0 < p.delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {p.delta}")
    arg = 24 * p.n_agents * p.ladder_rungs * p.sa**3 / p.delta
    return math.sqrt(2.0 * math.log(arg))


def compute_km(p: PacParams, ratio: float) -> int:
    """ceil(5.6 ln(8 N ceil(1 + log2 ratio) (SA)^2 / delta)) for a caller-fixed ratio k/k_m."""
    if ratio < 1:
        raise ValueError("ratio k/k_m must be at least 1")
    rungs = math.ceil(1 + math.log2(ratio))
    arg = 8 * p.n_agents * rungs * p.sa**2 / p.delta
    return max(1, math.ceil(5.6 * math.log(arg)))


def compute_eps_b(p: PacParams) -> float:
    return math.sqrt(4 * p.k_m * (p.sigma**2 + p.sigma_r**2))


def compute_k_min(p: PacParams) -> int:
    if p.eps_s <= 0:
        raise ValueError("eps_s must be positive")
    value = compute_eps_b(p) ** 2 / ((1 - p.gamma) ** 2 * p.eps_s**2)
    # guard against ceil() of an exact integer that picked up rounding error
    return math.ceil(value * (1 - 1e-12))


def compute_eps_eff(p: PacParams, f: float) -> np.ndarray:
    sigma_c = np.asarray(p.sigma_c, dtype=float)
    delta_q_c = np.asarray(p.delta_q_c, dtype=float)
    noise = 2 * (1 + 3 * p.gamma) * (delta_q_c + sigma_c * f)
    return (2 * p.eps_a + noise) / (1 - p.gamma) + 3 * p.eps_s


def compute_t_h(p: PacParams) -> int:
    if p.eps_s <= 0:
        raise ValueError("eps_s must be positive")
    return max(1, math.ceil(math.log(p.q_max / p.eps_s) / (1 - p.gamma)))


def compute_tce_bound(p: PacParams) -> float:
    """Explicit total-cost-of-exploration bound (denominator taken as 1).

    SA (1 + log2 T_H) T_H [Q_max (2 k_m + N ceil(3 + log2(k/k_m)))
    + (18 sqrt(k) + 10 N) sqrt(8 k_m (sigma^2 + sigma_R^2))]
    """
    t_h = compute_t_h(p)
    n = p.n_agents
    q_term = p.q_max * (2 * p.k_m + n * math.ceil(3 + math.log2(p.k / p.k_m)))
    noise_term = (18 * math.sqrt(p.k) + 10 * n) * math.sqrt(8 * p.k_m * (p.sigma**2 + p.sigma_r**2))
    return p.sa * (1 + math.log2(t_h)) * t_h * (q_term + noise_term)


def pac_report(p: PacParams) -> PacReport:
    f = compute_f(p)
    return PacReport(
        f_value=f,
        eps_b=compute_eps_b(p),
        k_min=compute_k_min(p),
        eps_eff=[float(x) for x in compute_eps_eff(p, f)],
        tce_bound=compute_tce_bound(p),
        t_h=compute_t_h(p),
        km_suggested=compute_km(p, p.k / p.k_m),
    )


def empirical_tce(trace, mdp: Mdp, q_star: np.ndarray, eps: float) -> float:
    """Sum over records of max(0, V*(s_t) - V^pi_t(s_t) - eps).

    Each record must carry the agent's committed greedy ``policy`` at that
    step; V^pi_t is the exact stationary value of that policy on ``mdp``.
    """
    v_star = q_star.max(axis=1)
    cache = {}
    total = 0.0
    for rec in trace:
        key = id(rec.policy)
        if key not in cache:
            cache[key] = (rec.policy, policy_evaluation(mdp, rec.policy))
        gap = v_star[rec.state] - cache[key][1][rec.state] - eps
        if gap > 0:
            total += gap
    return total
