"""Tabular MDPs, saturated Q-tables, exact value iteration and the wrap-around grid world."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Grid actions: 0 up, 1 down, 2 left, 3 right. Row 0 is the bottom row.
ACTIONS = ((1, 0), (-1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("up", "down", "left", "right")


@dataclass
class Mdp:
    """Finite MDP with dense transition and reward arrays.

    ``transition[s, a, s']`` is p(s'|s,a) and ``reward[s, a, s']`` is R(s,a,s').
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    r_max: float | None = None

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        if self.transition.ndim != 3 or self.transition.shape[0] != self.transition.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {self.transition.shape}")
        if self.reward.shape != self.transition.shape:
            raise ValueError("reward and transition shapes differ")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any(self.transition < 0) or np.any(
            np.abs(self.transition.sum(axis=2) - 1.0) > 1e-12
        ):
            raise ValueError("every transition row must be a probability distribution")
        if self.r_max is None:
            self.r_max = float(max(self.reward.max(), 0.0))
        if np.any(self.reward < 0) or np.any(self.reward > self.r_max):
            raise ValueError("rewards must lie in [0, r_max]")

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def q_max(self) -> float:
        return self.r_max / (1.0 - self.discount)

    def expected_reward(self) -> np.ndarray:
        return np.einsum("ijk,ijk->ij", self.transition, self.reward)

    def step(self, state: int, action: int, rng: np.random.Generator) -> tuple[int, float]:
        nxt = int(rng.choice(self.num_states, p=self.transition[state, action]))
        return nxt, float(self.reward[state, action, nxt])

    def is_restart(self, state: int) -> bool:
        return False


def saturate(q: np.ndarray, q_max: float) -> np.ndarray:
    """Clamp every entry of ``q`` to ``[0, q_max]``."""
    return np.clip(q, 0.0, q_max)


def greedy_action(q: np.ndarray, state: int) -> int:
    # np.argmax returns the first maximiser, i.e. the lowest action index on ties.
    return int(np.argmax(q[state]))


def greedy_policy(q: np.ndarray) -> np.ndarray:
    return np.argmax(q, axis=1)


def bellman_optimality(mdp: Mdp, q: np.ndarray) -> np.ndarray:
    """One exact Bellman backup with the greedy policy over ``q``."""
    return mdp.expected_reward() + mdp.discount * mdp.transition @ q.max(axis=1)


def value_iteration_cap(q_max: float, discount: float, tol: float) -> int:
    if q_max <= tol:
        return 1
    return max(1, math.ceil(math.log(q_max / tol) / (1.0 - discount)))


def exact_value_iteration(mdp: Mdp, tol: float = 1e-10) -> np.ndarray:
    """Q* up to a Bellman residual of ``tol``, starting from the zero table.

    The sweep count is capped at ``ceil(ln(Q_max/tol) / (1 - gamma))`` which,
    for a start at zero, is enough for the residual to drop below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    exp_r = mdp.expected_reward()
    q = np.zeros((mdp.num_states, mdp.num_actions))
    for _ in range(value_iteration_cap(mdp.q_max, mdp.discount, tol)):
        new = exp_r + mdp.discount * mdp.transition @ q.max(axis=1)
        residual = np.max(np.abs(new - q))
        q = new
        if residual <= tol:
            break
    return q


def policy_evaluation(mdp: Mdp, policy: np.ndarray) -> np.ndarray:
    """Exact V^pi of a deterministic stationary policy (linear solve)."""
    idx = np.arange(mdp.num_states)
    p_pi = mdp.transition[idx, policy]
    r_pi = np.einsum("ij,ij->i", p_pi, mdp.reward[idx, policy])
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * p_pi, r_pi)


def bellman_variance(mdp: Mdp, q: np.ndarray) -> float:
    """Largest per-(s,a) variance of R + gamma*max Q(s') under the true dynamics."""
    target = mdp.reward + mdp.discount * q.max(axis=1)[None, None, :]
    mean = np.einsum("ijk,ijk->ij", mdp.transition, target)
    var = np.einsum("ijk,ijk->ij", mdp.transition, (target - mean[..., None]) ** 2)
    return float(var.max())


@dataclass(frozen=True)
class GridWorld:
    """Square grid with the goal in the top-right corner.

    With ``wrap`` the grid is a torus; otherwise moves into a wall stay put.
    Landing on the goal pays 1. The re-initialisation after a goal visit is
    an environment reset and is not part of the learned transition.
    """

    side: int = 5
    wrap: bool = True
    discount: float = 0.98
    _next: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("side must be positive")
        nxt = np.empty((self.num_states, 4), dtype=np.int64)
        for s in range(self.num_states):
            row, col = divmod(s, self.side)
            for a, (dr, dc) in enumerate(ACTIONS):
                r2, c2 = row + dr, col + dc
                if self.wrap:
                    r2 %= self.side
                    c2 %= self.side
                else:
                    r2 = min(max(r2, 0), self.side - 1)
                    c2 = min(max(c2, 0), self.side - 1)
                nxt[s, a] = r2 * self.side + c2
        object.__setattr__(self, "_next", nxt)

    @property
    def num_states(self) -> int:
        return self.side * self.side

    @property
    def num_actions(self) -> int:
        return 4

    @property
    def goal(self) -> int:
        return self.num_states - 1

    @property
    def r_max(self) -> float:
        return 1.0

    @property
    def q_max(self) -> float:
        return self.r_max / (1.0 - self.discount)

    def coords(self, state: int) -> tuple[int, int]:
        return divmod(state, self.side)

    def next_states(self) -> np.ndarray:
        return self._next.copy()

    def step(self, state: int, action: int, rng=None) -> tuple[int, float]:
        nxt = int(self._next[state, action])
        return nxt, 1.0 if nxt == self.goal else 0.0

    def is_restart(self, state: int) -> bool:
        return state == self.goal

    def to_mdp(self) -> Mdp:
        s_count = self.num_states
        p = np.zeros((s_count, 4, s_count))
        r = np.zeros((s_count, 4, s_count))
        for s in range(s_count):
            for a in range(4):
                p[s, a, self._next[s, a]] = 1.0
        r[:, :, self.goal] = 1.0
        return Mdp(p, r, self.discount, r_max=1.0)


def grid_step(g: GridWorld, state: int, action: int) -> tuple[int, float]:
    if not 0 <= state < g.num_states or not 0 <= action < 4:
        raise ValueError(f"invalid state/action ({state}, {action})")
    return g.step(state, action)


def random_deterministic_mdp(
    num_states: int, num_actions: int, discount: float, rng: np.random.Generator
) -> Mdp:
    """Random deterministic MDP whose action 0 walks a ring, so every state is reachable."""
    p = np.zeros((num_states, num_actions, num_states))
    for s in range(num_states):
        p[s, 0, (s + 1) % num_states] = 1.0
        for a in range(1, num_actions):
            p[s, a, rng.integers(num_states)] = 1.0
    r = rng.uniform(0.0, 1.0, size=(num_states, num_actions, 1)) * np.ones((1, 1, num_states))
    return Mdp(p, r, discount, r_max=1.0)


def random_mdp(
    num_states: int, num_actions: int, discount: float, rng: np.random.Generator
) -> Mdp:
    p = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(num_states, num_actions, num_states))
    return Mdp(p, r, discount, r_max=1.0)
