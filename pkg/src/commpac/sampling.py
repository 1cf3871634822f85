"""Sample sets, the median-of-means Bellman operator and approximate value iteration."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

REPLACE = "replace"
ACCUMULATE = "accumulate"


class Sample(NamedTuple):
    state: int
    action: int
    reward: float  # noisy, may fall outside [0, R_max]
    next_state: int
    agent_id: int = 0
    time: int = 0


@dataclass
class BellmanConfig:
    """Parameters of the approximate Bellman operator and its value iteration.

    eps_b scales the optimism bonus ``eps_b / sqrt(|u|)``; value iteration stops
    once every residual is at most ``eps_a`` or after ``max_sweeps`` sweeps.
    """

    gamma: float
    q_max: float
    eps_b: float = 0.1
    eps_a: float = 1e-7
    max_sweeps: int = 30
    mode: str = ACCUMULATE

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.q_max <= 0:
            raise ValueError("q_max must be positive")
        if self.eps_b < 0:
            raise ValueError("eps_b must be non-negative")
        if self.eps_a <= 0:
            raise ValueError("eps_a must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.mode not in (REPLACE, ACCUMULATE):
            raise ValueError(f"unknown mode {self.mode!r}")


def is_ladder_size(n: int, k_m: int) -> bool:
    """True when ``n == 2**p * k_m`` for some integer p >= 0."""
    if n <= 0 or n % k_m:
        return False
    ratio = n // k_m
    return ratio & (ratio - 1) == 0


def validate_sizes(k: int, k_m: int, mode: str) -> None:
    if k_m < 1 or k < k_m:
        raise ValueError(f"need 1 <= k_m <= k, got k={k}, k_m={k_m}")
    if mode == REPLACE and not is_ladder_size(k, k_m):
        raise ValueError(f"replace mode needs k/k_m to be a power of two, got {k}/{k_m}")
    if mode == ACCUMULATE and k % k_m:
        raise ValueError(f"accumulate mode needs k to be a multiple of k_m, got {k}/{k_m}")


@dataclass
class SampleSet:
    """Active samples u(s,a) and the pending buffer that replaces or extends them."""

    k: int
    k_m: int
    active: list = field(default_factory=list)
    pending: list = field(default_factory=list)

    def __len__(self):
        return len(self.active)


def _targets(q: np.ndarray, samples, gamma: float) -> np.ndarray:
    vmax = q.max(axis=1)
    return np.array([smp.reward + gamma * vmax[smp.next_state] for smp in samples])


def group_mean(q: np.ndarray, u: SampleSet, j: int, gamma: float) -> float:
    """Mean of R + gamma * max_a' q(s', a') over the j-th (1-based) contiguous block."""
    n = len(u.active)
    if n == 0:
        raise ValueError("group_mean of an empty sample set")
    if n % u.k_m:
        raise ValueError(f"|u|={n} is not divisible into {u.k_m} groups")
    if not 1 <= j <= u.k_m:
        raise ValueError(f"group index {j} outside 1..{u.k_m}")
    size = n // u.k_m
    block = u.active[(j - 1) * size : j * size]
    return float(np.mean(_targets(q, block, gamma)))


def median_of_means(q: np.ndarray, u: SampleSet, cfg: BellmanConfig) -> float:
    means = [group_mean(q, u, j, cfg.gamma) for j in range(1, u.k_m + 1)]
    # np.median averages the two middle values for an even group count.
    return cfg.eps_b / math.sqrt(len(u.active)) + float(np.median(means))


def approx_bellman(q: np.ndarray, u: SampleSet, cfg: BellmanConfig) -> float:
    if not u.active:
        return cfg.q_max
    return min(max(median_of_means(q, u, cfg), 0.0), cfg.q_max)


def ingest_sample(sets: Mapping, s: Sample, cfg: BellmanConfig) -> bool:
    """Route one sample into its pending buffer; return True when u(s,a) changed.

    The sample is kept only while the active set is below k. Once the pending
    buffer is larger than the active set and sits on the doubling ladder it
    replaces the active set (or is appended to it, keeping the newest k, in
    accumulate mode).
    """
    if isinstance(sets, SampleTable):
        return sets.ingest(s, cfg.mode)
    u = sets[(s.state, s.action)]
    return _ingest_into(u, s, cfg.mode)


def _ingest_into(u: SampleSet, s: Sample, mode: str) -> bool:
    if len(u.active) >= u.k:
        return False
    u.pending.append(s)
    n = len(u.pending)
    if n > len(u.active) and is_ladder_size(n, u.k_m):
        if mode == REPLACE:
            u.active = u.pending
        else:
            u.active = (u.active + u.pending)[-u.k :]
        u.pending = []
        return True
    return False


def _row_median(x: np.ndarray) -> np.ndarray:
    # Same values as np.median(x, axis=1), without its per-call overhead.
    x = np.sort(x, axis=1)
    mid = x.shape[1] // 2
    if x.shape[1] % 2:
        return x[:, mid]
    return 0.5 * (x[:, mid - 1] + x[:, mid])


class SampleTable(Mapping):
    """The learner's map (s, a) -> SampleSet, with packed arrays for fast sweeps.

    Rewards and next states of every active set are mirrored into dense
    ``(S, A, k)`` arrays whenever a set changes, so a full B~ sweep is a few
    vectorised operations instead of S*A Python calls.
    """

    def __init__(
        self, num_states: int, num_actions: int, k: int, k_m: int, mode: str = ACCUMULATE,
        check: bool = True,
    ):
        if check:
            validate_sizes(k, k_m, mode)
        self.num_states = num_states
        self.num_actions = num_actions
        self.k = k
        self.k_m = k_m
        self.mode = mode
        self._sets = {
            (s, a): SampleSet(k, k_m) for s in range(num_states) for a in range(num_actions)
        }
        self.rewards = np.zeros((num_states, num_actions, k))
        self.next_states = np.zeros((num_states, num_actions, k), dtype=np.int64)
        self.counts = np.zeros((num_states, num_actions), dtype=np.int64)
        self._groups = None

    @classmethod
    def from_sets(cls, sets: Mapping, num_states: int, num_actions: int, mode: str) -> SampleTable:
        """Wrap an arbitrary (s, a) -> SampleSet mapping; missing pairs are empty."""
        first = next(iter(sets.values()))
        k = max([first.k] + [len(u.active) for u in sets.values()])
        table = cls(num_states, num_actions, k, first.k_m, mode, check=False)
        for key, u in sets.items():
            table._sets[key] = u
            table._sync(key[0], key[1], u)
        return table

    def __getitem__(self, key):
        return self._sets[key]

    def __iter__(self):
        return iter(self._sets)

    def __len__(self):
        return len(self._sets)

    def ingest(self, s: Sample, mode: str | None = None) -> bool:
        u = self._sets[(s.state, s.action)]
        changed = _ingest_into(u, s, mode or self.mode)
        if changed:
            self._sync(s.state, s.action, u)
        return changed

    def _sync(self, state: int, action: int, u: SampleSet):
        n = len(u.active)
        self.counts[state, action] = n
        self.rewards[state, action, :n] = [smp.reward for smp in u.active]
        self.next_states[state, action, :n] = [smp.next_state for smp in u.active]
        self._groups = None

    def stored_samples(self) -> int:
        return sum(len(u.active) + len(u.pending) for u in self._sets.values())

    def groups(self):
        """(count, state index array, action index array) for each non-zero active size."""
        if self._groups is None:
            self._groups = []
            for c in np.unique(self.counts):
                if c == 0:
                    continue
                ss, aa = np.nonzero(self.counts == c)
                self._groups.append((int(c), ss, aa))
        return self._groups

    def sweep(self, q: np.ndarray, cfg: BellmanConfig) -> np.ndarray:
        """Apply B~ to every state-action at once."""
        vmax = q.max(axis=1)
        out = np.full_like(q, cfg.q_max, dtype=float)
        for c, ss, aa in self.groups():
            targets = self.rewards[ss, aa, :c] + cfg.gamma * vmax[self.next_states[ss, aa, :c]]
            size = c // self.k_m
            means = targets.reshape(len(ss), self.k_m, size).sum(axis=2) / size
            est = _row_median(means) + cfg.eps_b / math.sqrt(c)
            out[ss, aa] = np.clip(est, 0.0, cfg.q_max)
        return out


def value_iteration(q: np.ndarray, sets: Mapping, cfg: BellmanConfig) -> tuple[np.ndarray, int]:
    """Synchronous sweeps Q <- B~Q until max|B~Q - Q| <= eps_a or the sweep cap.

    Returns the last B~Q and the number of B~ evaluations performed.
    """
    if not isinstance(sets, SampleTable):
        sets = SampleTable.from_sets(sets, q.shape[0], q.shape[1], cfg.mode)
    sweeps = 0
    while True:
        new = sets.sweep(q, cfg)
        sweeps += 1
        residual = np.max(np.abs(new - q))
        q = new
        if residual <= cfg.eps_a or sweeps >= cfg.max_sweeps:
            return q, sweeps
