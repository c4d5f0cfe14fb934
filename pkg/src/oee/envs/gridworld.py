"""Slippery n x n gridworld with an exact transition table.

States are ``(x, y)`` cells stored as floats; ``(0, 0)`` is the bottom-left
start and ``(n-1, n-1)`` the absorbing goal. Actions are N, S, E, W. The
intended move happens with probability ``1 - eps`` and each of the other three
directions with ``eps / 3``. Any move that would leave the grid keeps the agent
where it is, so the blocked mass lands on the stay-in-place outcome.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from oee.core import ActionSpec, Policy

N, S, E, W = range(4)
ACTION_NAMES = "NSEW"
MOVES = ((0, 1), (0, -1), (1, 0), (-1, 0))


class DomainError(ValueError):
    pass


class SupportError(ValueError):
    pass


@dataclass(frozen=True)
class GridworldSpec:
    n: int = 10
    eps: float = 0.0
    step_reward: float = -1.0
    gamma: float = 0.99

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid side must be at least 2")
        if not 0.0 <= self.eps < 1.0:
            raise ValueError(f"slip probability must lie in [0, 1), got {self.eps}")

    @property
    def start(self) -> tuple[int, int]:
        return (0, 0)

    @property
    def goal(self) -> tuple[int, int]:
        return (self.n - 1, self.n - 1)


class Gridworld:
    state_dim = 2
    action_spec = ActionSpec(n=4)
    reward_on_arrival = False

    def __init__(self, spec: GridworldSpec):
        self.spec = spec
        n = spec.n
        self.n_states = n * n
        self.goal_index = self.index(spec.goal)
        self.start_index = self.index(spec.start)

        # dest[i, k]: cell reached from i by physically moving in direction k
        dest = np.empty((self.n_states, 4), dtype=np.int64)
        for x in range(n):
            for y in range(n):
                i = x * n + y
                for k, (dx, dy) in enumerate(MOVES):
                    nx, ny = x + dx, y + dy
                    dest[i, k] = nx * n + ny if 0 <= nx < n and 0 <= ny < n else i
        dest[self.goal_index, :] = self.goal_index
        self.dest = dest

        # move_prob[a, k]: probability of physically moving in direction k under action a
        mp = np.full((4, 4), spec.eps / 3.0)
        np.fill_diagonal(mp, 1.0 - spec.eps)
        self.move_prob = mp
        self._move_cdf = [tuple(row) for row in np.cumsum(mp, axis=1).tolist()]
        self._dest_rows = dest.tolist()
        self._cells = [np.array(divmod(i, n), dtype=float) for i in range(self.n_states)]
        for c in self._cells:
            c.flags.writeable = False

    # ----- indexing

    def index(self, s) -> int:
        x, y = int(s[0]), int(s[1])
        if not (0 <= x < self.spec.n and 0 <= y < self.spec.n) or x != s[0] or y != s[1]:
            raise DomainError(f"state {tuple(s)} is not a cell of the {self.spec.n}x{self.spec.n} grid")
        return x * self.spec.n + y

    def cell(self, i: int) -> np.ndarray:
        return self._cells[i]

    def is_goal(self, s) -> bool:
        return self.index(s) == self.goal_index

    # ----- dynamics

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return self._cells[self.start_index]

    def step(self, s, a, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]:
        i = self.index(s)
        a = int(a)
        if not 0 <= a < 4:
            raise DomainError(f"action {a} is not one of N, S, E, W")
        if i == self.goal_index:
            return self._cells[i], 0.0, True
        k = bisect_right(self._move_cdf[a], rng.random())
        j = self._dest_rows[i][min(k, 3)]
        return self._cells[j], self.spec.step_reward, j == self.goal_index

    def row(self, i: int, a: int) -> dict[int, float]:
        """Exact next-state distribution ``{j: P(j | i, a)}``."""
        if i == self.goal_index:
            return {i: 1.0}
        out: dict[int, float] = {}
        for k in range(4):
            p = float(self.move_prob[a, k])
            if p:
                j = int(self.dest[i, k])
                out[j] = out.get(j, 0.0) + p
        return out

    def transition_prob(self, s, a, s_next) -> float:
        return self.row(self.index(s), int(a)).get(self.index(s_next), 0.0)

    @cached_property
    def kernel(self) -> np.ndarray:
        """Dense ``P[i, a, j]``; fine for the grid sizes used here (40x40 is 80 MB)."""
        P = np.zeros((self.n_states, 4, self.n_states))
        for i in range(self.n_states):
            for a in range(4):
                for j, p in self.row(i, a).items():
                    P[i, a, j] = p
        return P

    def nonterminal_states(self) -> list[int]:
        return [i for i in range(self.n_states) if i != self.goal_index]

    # ----- planning

    def value_iteration(self, tol: float = 1e-10, max_iter: int = 200_000) -> tuple[np.ndarray, np.ndarray]:
        """Optimal values and Q-values under this grid's own dynamics."""
        g = self.spec.gamma
        V = np.zeros(self.n_states)
        for _ in range(max_iter):
            # Q[i, a] = sum_k P(k | a) * (r + g * V[dest[i, k]])
            Q = self.spec.step_reward + g * V[self.dest] @ self.move_prob.T
            Q[self.goal_index] = 0.0
            V_new = Q.max(axis=1)
            if np.max(np.abs(V_new - V)) < tol:
                V = V_new
                break
            V = V_new
        Q = self.spec.step_reward + g * V[self.dest] @ self.move_prob.T
        Q[self.goal_index] = 0.0
        return V, Q

    def expert_policy(self) -> Policy:
        """Greedy policy of value iteration; ties go to the lowest action index."""
        _, Q = self.value_iteration()
        best = np.argmax(Q >= Q.max(axis=1, keepdims=True) - 1e-9, axis=1)
        table = best.reshape(self.spec.n, self.spec.n)
        return Policy("expert-table", self.action_spec, table=table, state_dim=2)


def gridworld_transition_prob(spec: GridworldSpec, s, a, s_next) -> float:
    return Gridworld(spec).transition_prob(s, a, s_next)


def true_zeta_gridworld(env_tr: Gridworld, env_te: Gridworld, s, a, s_next) -> float:
    """Exact ``P_te(s'|s,a) / P_tr(s'|s,a)``."""
    p_tr = env_tr.transition_prob(s, a, s_next)
    if p_tr <= 0.0:
        raise SupportError(f"P_tr({tuple(s_next)} | {tuple(s)}, {a}) = 0")
    return env_te.transition_prob(s, a, s_next) / p_tr
