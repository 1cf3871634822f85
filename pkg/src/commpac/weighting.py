"""Linear fusion of an agent's learner copy with its neighbours' relayed copies.

Weights are written as ``(w_ii; w_ji for each neighbour j)`` and always sum to one.
Noise scales are passed as standard deviations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .mdp import saturate


@dataclass(frozen=True)
class WeightVector:
    self_weight: float
    neighbor_weights: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "neighbor_weights", tuple(float(w) for w in self.neighbor_weights))
        total = self.self_weight + sum(self.neighbor_weights)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {total!r}")

    @property
    def degree(self) -> int:
        return len(self.neighbor_weights)

    def as_array(self) -> np.ndarray:
        return np.array((self.self_weight,) + self.neighbor_weights)

    @classmethod
    def learner_only(cls, d: int) -> WeightVector:
        return cls(1.0, (0.0,) * d)

    @classmethod
    def uniform(cls, d: int) -> WeightVector:
        return cls.from_self_weight(1.0 / (d + 1), d)

    @classmethod
    def from_self_weight(cls, w_ii: float, d: int) -> WeightVector:
        """``w_ii`` for the learner copy, the remainder split equally over d neighbours."""
        if d == 0:
            return cls(1.0)
        share = (1.0 - w_ii) / d
        return cls(1.0 - share * d, (share,) * d)


def fuse(q_learner: np.ndarray, q_neighbors, w: WeightVector, q_max: float) -> np.ndarray:
    if len(q_neighbors) != w.degree:
        raise ValueError(f"{len(q_neighbors)} neighbour tables for {w.degree} weights")
    out = w.self_weight * q_learner
    for wj, qj in zip(w.neighbor_weights, q_neighbors):
        out = out + wj * qj
    return saturate(out, q_max)


def fused_variance(w: WeightVector, sigma_l: float, sigma_a, sigma_l_neighbors=None) -> float:
    """sigma_c^2(w) for additive noise: sum_j w_j^2 (sL_j^2 + sA_j^2) + w_ii^2 sL^2."""
    sigma_a = np.asarray(sigma_a, dtype=float)
    sl_n = _neighbor_scales(sigma_l, sigma_a, sigma_l_neighbors)
    wn = np.asarray(w.neighbor_weights)
    return float(np.sum(wn**2 * (sl_n**2 + sigma_a**2)) + (1.0 - wn.sum()) ** 2 * sigma_l**2)


def quantization_bound(w: WeightVector, dq_self: float, dq_neighbors, dq_links) -> float:
    """Bound on the fused quantization error: dQ_i|w_ii| + sum_j (dQ_j + dQ_ji)|w_ji|."""
    dq = np.asarray(dq_neighbors, dtype=float) + np.asarray(dq_links, dtype=float)
    return float(dq_self * abs(w.self_weight) + np.sum(dq * np.abs(w.neighbor_weights)))


def _neighbor_scales(sigma_l, sigma_a, sigma_l_neighbors):
    if sigma_l_neighbors is None:
        return np.full(len(sigma_a), float(sigma_l))
    out = np.asarray(sigma_l_neighbors, dtype=float)
    if out.shape != np.shape(sigma_a):
        raise ValueError("one learner scale per neighbour is required")
    return out


def additive_system(sigma_l: float, sigma_a, sigma_l_neighbors=None) -> tuple[np.ndarray, np.ndarray]:
    """Matrix A and right-hand side whose solution minimises sigma_c^2.

    A = 2 sL^2 * ones + 2 diag(sL_j^2 + sA_j^2); with every sL_j equal to sL this
    is the rank-one term plus 2 diag(sA^2) plus 2 sL^2 I.
    """
    sigma_a = np.asarray(sigma_a, dtype=float)
    d = len(sigma_a)
    sl_n = _neighbor_scales(sigma_l, sigma_a, sigma_l_neighbors)
    rhs = np.full(d, 2.0 * sigma_l**2)
    a = np.full((d, d), 2.0 * sigma_l**2) + 2.0 * np.diag(sl_n**2 + sigma_a**2)
    return a, rhs


def optimal_additive_weights(sigma_l: float, sigma_a, sigma_l_neighbors=None) -> WeightVector:
    """Weights minimising the fused additive noise for one agent.

    ``sigma_a[j]`` is the agent-agent scale on the link from neighbour j;
    ``sigma_l_neighbors`` defaults to ``sigma_l`` for every neighbour.
    """
    if sigma_l <= 0:
        raise ValueError("sigma_l must be positive")
    sigma_a = np.asarray(sigma_a, dtype=float).reshape(-1)
    if len(sigma_a) == 0:
        return WeightVector(1.0)
    a, rhs = additive_system(sigma_l, sigma_a, sigma_l_neighbors)
    w = cho_solve(cho_factor(a), rhs)
    return WeightVector(1.0 - w.sum(), tuple(w))


def identical_case_weights(sigma_l: float, sigma_a: float, d: int) -> WeightVector:
    if sigma_l <= 0:
        raise ValueError("sigma_l must be positive")
    if d < 0:
        raise ValueError("d must be non-negative")
    if d == 0:
        return WeightVector(1.0)
    sl2, sa2 = sigma_l**2, sigma_a**2
    return WeightVector.from_self_weight((sl2 + sa2) / ((d + 1) * sl2 + sa2), d)


def uniform_variance(sigma_l: float, sigma_a: float, d: int) -> float:
    return sigma_l**2 / (d + 1) + d * sigma_a**2 / (d + 1) ** 2


def uniform_vs_learner_only(sigma_l: float, sigma_a: float, d: int) -> bool:
    """True when a uniform average is no noisier than the learner copy alone."""
    if sigma_l <= 0:
        raise ValueError("sigma_l must be positive")
    return uniform_variance(sigma_l, sigma_a, d) <= sigma_l**2


def quantization_objective(w, sigma_l: float, delta_q: float, d: int, f: float):
    """g(w) for identical agents: additive bound plus quantization bound, as a function of w_ii."""
    w = np.asarray(w, dtype=float)
    return sigma_l * f * np.sqrt(w**2 + 2.0 * (1.0 - w) ** 2 / d) + delta_q * (
        np.abs(w) + 2.0 * np.abs(1.0 - w)
    )


def quantization_weights(sigma_l: float, delta_q: float, d: int, f: float) -> WeightVector:
    """Minimiser of g(w) for identical agents with quantization half-width ``delta_q``.

    With c = dQ / (f sL) the stationary point of g on [2/(d+2), 1] is
    w = 2/(d+2) * (1 + d / sqrt(2 (d+2) / c^2 - 2 d)); it reaches 1 at c = 1
    and for c >= 1 the learner copy alone is optimal.
    """
    if sigma_l <= 0 or f <= 0:
        raise ValueError("sigma_l and f must be positive")
    if delta_q < 0:
        raise ValueError("delta_q must be non-negative")
    if d == 0:
        return WeightVector(1.0)
    if f * sigma_l <= delta_q:
        return WeightVector.from_self_weight(1.0, d)
    c = delta_q / (f * sigma_l)
    # d / sqrt(2(d+2)/c^2 - 2d) multiplied through by c, finite as c -> 0
    w = 2.0 / (d + 2) * (1.0 + d * c / math.sqrt(2.0 * (d + 2) - 2.0 * d * c * c))
    return WeightVector.from_self_weight(min(w, 1.0), d)


def _refine_grid(objective, lo, hi, dim, coarse, fine):
    """Nested grid search on the box [lo, hi]^dim down to spacing ``fine``."""
    step = coarse
    axes = [np.arange(lo, hi + step / 2, step)] * dim
    best = None
    while True:
        pts = np.array(list(itertools.product(*axes))) if dim > 1 else axes[0][:, None]
        vals = objective(pts)
        i = int(np.argmin(vals))
        best = pts[i]
        if step <= fine * (1 + 1e-9):
            return best, float(vals[i])
        new_step = max(step / 10.0, fine)
        axes = [
            np.clip(np.arange(b - 2 * step, b + 2 * step + new_step / 2, new_step), lo, hi)
            for b in best
        ]
        axes = [np.unique(ax) for ax in axes]
        step = new_step


def brute_force_weight_oracle(objective: str, params: dict, grid_step: float = 1e-4) -> WeightVector:
    """Grid-minimise a weighting objective without using any closed form.

    ``objective='additive'`` minimises sigma_c^2 over the neighbour weights in
    [0, 1]^d (params: sigma_l, sigma_a, optional sigma_l_neighbors);
    ``objective='quantization'`` minimises g(w) over w_ii in [0, 1]
    (params: sigma_l, delta_q, d, f). d > 3 falls back to cyclic coordinate
    descent with the same 1-D refinement.
    """
    if objective == "quantization":
        p = params
        w, _ = _refine_grid(
            lambda pts: quantization_objective(pts[:, 0], p["sigma_l"], p["delta_q"], p["d"], p["f"]),
            0.0, 1.0, 1, 1e-2, grid_step,
        )
        return WeightVector.from_self_weight(float(w[0]), p["d"])
    if objective != "additive":
        raise ValueError(f"unknown objective {objective!r}")

    sigma_l = float(params["sigma_l"])
    sigma_a = np.asarray(params["sigma_a"], dtype=float)
    sl_n = _neighbor_scales(sigma_l, sigma_a, params.get("sigma_l_neighbors"))
    d = len(sigma_a)
    if d == 0:
        return WeightVector(1.0)
    var_n = sl_n**2 + sigma_a**2

    def sigma_c_sq(pts):
        return (pts**2 * var_n).sum(axis=1) + (1.0 - pts.sum(axis=1)) ** 2 * sigma_l**2

    if d <= 3:
        coarse = {1: 1e-3, 2: 1e-2, 3: 2e-2}[d]
        w, _ = _refine_grid(sigma_c_sq, 0.0, 1.0, d, coarse, grid_step)
    else:
        w = np.full(d, 1.0 / (d + 1))
        for _ in range(200):
            prev = w.copy()
            for j in range(d):
                def along(pts, j=j):
                    trial = np.repeat(w[None, :], len(pts), axis=0)
                    trial[:, j] = pts[:, 0]
                    return sigma_c_sq(trial)
                w[j] = _refine_grid(along, 0.0, 1.0, 1, 1e-2, grid_step)[0][0]
            if np.max(np.abs(w - prev)) < grid_step:
                break
    return WeightVector(1.0 - float(np.sum(w)), tuple(w))


@dataclass(frozen=True)
class NoiseEstimate:
    """Running estimates of the learner-link and relayed-link noise variances."""

    sigma_l_sq_hat: float = 0.0
    sigma_la_sq_hat: float = 0.0
    t: int = 0

    def weights(self, d: int, degree_corrected: bool = False) -> WeightVector:
        if d == 0:
            return WeightVector(1.0)
        l_hat, la_hat = self.sigma_l_sq_hat, self.sigma_la_sq_hat
        denom = la_hat + (d * l_hat if degree_corrected else l_hat)
        if self.t == 0 or denom <= 0:
            return WeightVector.uniform(d)
        return WeightVector.from_self_weight(la_hat / denom, d)


def adaptive_weight_update(
    est: NoiseEstimate,
    q: np.ndarray,
    q_learner_noisy: np.ndarray,
    q_neighbors_noisy,
    degree_corrected: bool = False,
) -> tuple[NoiseEstimate, WeightVector]:
    """Fold one broadcast's residuals into the running variance estimates.

    The weights returned are built from the estimates *before* this update:
    ``w_ii = la / (la + l)``, or ``la / (la + d*l)`` with ``degree_corrected``.
    """
    d = len(q_neighbors_noisy)
    weights = est.weights(d, degree_corrected)
    t = est.t + 1
    sa = q.size
    l_batch = float(np.sum((q_learner_noisy - q) ** 2)) / (sa - 1)
    l_hat = est.sigma_l_sq_hat + (l_batch - est.sigma_l_sq_hat) / t
    if d:
        resid = sum(float(np.sum((qj - q) ** 2)) for qj in q_neighbors_noisy)
        la_batch = resid / (sa * d - 1)
        la_hat = est.sigma_la_sq_hat + (la_batch - est.sigma_la_sq_hat) / t
    else:
        la_hat = est.sigma_la_sq_hat
    return NoiseEstimate(l_hat, la_hat, t), weights
