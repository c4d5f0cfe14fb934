"""Shared vocabulary: transitions, datasets, policies, rollouts and returns."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Protocol, Sequence

import numpy as np

from oee.rng import stream


class DimensionError(ValueError):
    pass


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionSpec:
    """Either ``n`` discrete actions or a ``dim``-dimensional box ``[low, high]``."""

    n: int | None = None
    dim: int | None = None
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if (self.n is None) == (self.dim is None):
            raise ValueError("exactly one of n (discrete) or dim (continuous) must be set")

    @property
    def discrete(self) -> bool:
        return self.n is not None

    @property
    def width(self) -> int:
        """Number of columns an action occupies in a flat record."""
        return 1 if self.discrete else self.dim

    def token(self) -> str:
        return f"d{self.n}" if self.discrete else f"c{self.dim}"

    @classmethod
    def parse(cls, token: str, low: float = 0.0, high: float = 1.0) -> "ActionSpec":
        kind, num = token[0], int(token[1:])
        if kind == "d":
            return cls(n=num)
        if kind == "c":
            return cls(dim=num, low=low, high=high)
        raise ValueError(f"bad action spec {token!r}")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int | np.ndarray
    s_next: np.ndarray
    r: float
    t: int


@dataclass
class Trajectory:
    transitions: list[Transition] = field(default_factory=list)

    def __len__(self):
        return len(self.transitions)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.transitions)

    @property
    def rewards(self) -> list[float]:
        return [tr.r for tr in self.transitions]

    def check(self) -> None:
        for i, tr in enumerate(self.transitions):
            if tr.t != i:
                raise ValueError(f"step {i} carries t={tr.t}")
            if i and not np.array_equal(self.transitions[i - 1].s_next, tr.s):
                raise ValueError(f"trajectory broken between steps {i - 1} and {i}")


@dataclass(frozen=True)
class DiscountSpec:
    gamma: float
    horizon: int
    n_rollouts: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.horizon < 1 or self.n_rollouts < 1:
            raise ValueError("horizon and n_rollouts must be positive")


class Environment(Protocol):
    state_dim: int
    action_spec: ActionSpec
    # True when the reward of a step depends on the state it lands in.
    reward_on_arrival: bool

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, s: np.ndarray, a, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]: ...


# --------------------------------------------------------------------------- policies


@dataclass(frozen=True)
class Policy:
    """A stationary policy.

    kinds:
        ``uniform``        uniform over discrete actions, or over the action box
        ``expert-table``   deterministic lookup ``table[int(s0), int(s1), ...]``
        ``expert-linear``  deterministic; 1-D ``weights`` gives the threshold rule
                           ``a = [w.s + b > 0]``, 2-D gives ``argmax(W s + b)``
        ``constant``       fixed continuous action ``value``
        ``delta-mixture``  ``weight_uniform * U + weight_expert * expert``
    """

    kind: str
    action_spec: ActionSpec
    table: np.ndarray | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | float = 0.0
    value: np.ndarray | None = None
    expert: "Policy | None" = None
    weight_uniform: float = 1.0
    weight_expert: float = 0.0
    state_dim: int | None = None

    def __post_init__(self):
        if self.kind == "delta-mixture":
            if self.expert is None or not self.action_spec.discrete:
                raise ValueError("a delta-mixture needs a discrete expert")
            if self.weight_uniform < 0 or self.weight_expert < 0:
                raise ValueError("mixture weights must be nonnegative")
            if abs(self.weight_uniform + self.weight_expert - 1.0) > 1e-12:
                raise ValueError("mixture weights must sum to 1")

    @property
    def deterministic(self) -> bool:
        if self.kind == "delta-mixture":
            return self.weight_uniform == 0.0
        return self.kind != "uniform"

    def _check_state(self, s: np.ndarray) -> None:
        if self.state_dim is not None and len(s) != self.state_dim:
            raise DimensionError(f"policy expects a {self.state_dim}-d state, got {len(s)}")

    def expert_action(self, s: np.ndarray):
        self._check_state(s)
        if self.kind == "expert-table":
            return int(self.table[tuple(int(v) for v in s)])
        if self.kind == "expert-linear":
            w = self.weights
            if w.ndim == 1:
                return int(float(w @ s) + float(self.bias) > 0.0)
            return int(np.argmax(w @ s + self.bias))
        if self.kind == "constant":
            return np.asarray(self.value, dtype=float)
        if self.kind == "delta-mixture" and self.weight_uniform == 0.0:
            return self.expert.expert_action(s)
        raise TypeError(f"{self.kind} policy is not deterministic")

    def probs(self, s: np.ndarray) -> np.ndarray:
        """Action distribution at ``s`` (discrete action spaces only)."""
        n = self.action_spec.n
        if n is None:
            raise TypeError("probs() needs a discrete action space")
        if self.kind == "uniform":
            self._check_state(s)
            return np.full(n, 1.0 / n)
        if self.kind == "delta-mixture":
            p = np.full(n, self.weight_uniform / n)
            p[self.expert.expert_action(s)] += self.weight_expert
            return p
        p = np.zeros(n)
        p[self.expert_action(s)] = 1.0
        return p

    def prob(self, s: np.ndarray, a: int) -> float:
        return float(self.probs(s)[int(a)])

    def describe(self) -> str:
        if self.kind == "delta-mixture":
            return f"mixture(u={self.weight_uniform:g};e={self.weight_expert:g};{self.expert.kind})"
        return self.kind


def uniform_policy(action_spec: ActionSpec) -> Policy:
    return Policy("uniform", action_spec)


def delta_mixture(expert: Policy, delta: float, expert_weight_is_delta: bool = True) -> Policy:
    """Mixture of uniform and ``expert``.

    With ``expert_weight_is_delta`` the result is ``(1-delta) U + delta expert``
    (gridworld convention); otherwise ``delta U + (1-delta) expert`` (cartpole).
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    we = delta if expert_weight_is_delta else 1.0 - delta
    return Policy(
        "delta-mixture",
        expert.action_spec,
        expert=expert,
        weight_uniform=1.0 - we,
        weight_expert=we,
        state_dim=expert.state_dim,
    )


def sample_action(policy: Policy, s: np.ndarray, rng: np.random.Generator):
    spec = policy.action_spec
    if not spec.discrete:
        if policy.kind == "uniform":
            return rng.uniform(spec.low, spec.high, size=spec.dim)
        return policy.expert_action(s)
    # one uniform draw per decision, whatever the policy, keeps streams aligned
    u = rng.random()
    if policy.kind == "delta-mixture":
        # u < weight_uniform picks a uniform action (u rescaled), else the expert's
        wu = policy.weight_uniform
        if u < wu:
            return min(int(u / wu * spec.n), spec.n - 1)
        return policy.expert.expert_action(s)
    p = policy.probs(s)
    a = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(a, spec.n - 1)


# --------------------------------------------------------------------------- rollouts


def rollout(env: Environment, policy: Policy, spec: DiscountSpec, rng: np.random.Generator) -> Trajectory:
    s = env.reset(rng)
    steps = []
    for t in range(spec.horizon):
        a = sample_action(policy, s, rng)
        s_next, r, done = env.step(s, a, rng)
        steps.append(Transition(s, a, s_next, r, t))
        s = s_next
        if done:
            break
    return Trajectory(steps)


def discounted_return(rewards: Sequence[float], gamma: float, weights: Sequence[float] | None = None) -> float:
    """``sum_t gamma^t w_t r_t``; ``weights=None`` means all ones."""
    total = 0.0
    for t, r in enumerate(rewards):
        wr = r if weights is None else weights[t] * r
        total += gamma**t * wr
    return total


@dataclass
class EvaluationReport:
    estimator: str
    values: np.ndarray
    gamma: float
    horizon: int
    seed: int | None = None
    delta: float | None = None
    ess: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def stderr(self) -> float | None:
        if self.n < 2:
            return None
        return float(np.std(self.values, ddof=1) / math.sqrt(self.n))

    def csv_row(self) -> str:
        def fmt(v):
            if v is None:
                return "NA"
            return f"{v:.17g}" if isinstance(v, float) else str(v)

        cols = [self.estimator, self.delta, self.mean, self.stderr, self.ess, self.n,
                self.horizon, self.gamma, self.seed]
        return ",".join(fmt(c) for c in cols)

    CSV_HEADER = "estimator,delta,mean,stderr,ess,n,T,gamma,seed"


def monte_carlo_return(env: Environment, policy: Policy, spec: DiscountSpec, seed: int,
                       estimator: str = "TrueValue") -> EvaluationReport:
    """Plain Monte Carlo estimate of the discounted, horizon-truncated return.

    Rollout ``i`` draws from ``stream(seed, i)``.
    """
    values = np.empty(spec.n_rollouts)
    for i in range(spec.n_rollouts):
        traj = rollout(env, policy, spec, stream(seed, i))
        values[i] = discounted_return(traj.rewards, spec.gamma)
    return EvaluationReport(estimator, values, spec.gamma, spec.horizon, seed=seed,
                            ess=float(spec.n_rollouts))


# --------------------------------------------------------------------------- datasets


@dataclass
class TransitionDataset:
    """Column-stored bag of transitions from one environment.

    ``a`` is an int vector for discrete action spaces and an ``(n, d_a)`` array
    otherwise. A new trajectory starts wherever ``t == 0``.
    """

    state_dim: int
    action_spec: ActionSpec
    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    r: np.ndarray
    source: str = "test"
    behavior: str = ""
    seed: int | None = None

    def __post_init__(self):
        n = len(self.t)
        if self.s.shape != (n, self.state_dim) or self.s_next.shape != (n, self.state_dim):
            raise DimensionError("state columns do not match the declared state dimension")
        if len(self.a) != n or len(self.r) != n:
            raise DimensionError("column lengths differ")
        if self.source not in ("train", "test"):
            raise ValueError(f"source must be train or test, got {self.source!r}")

    def __len__(self):
        return len(self.t)

    @property
    def records(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield Transition(self.s[i], self.a[i], self.s_next[i], float(self.r[i]), int(self.t[i]))

    def trajectories(self) -> list[Trajectory]:
        out: list[Trajectory] = []
        for tr in self.records:
            if tr.t == 0 or not out:
                out.append(Trajectory())
            out[-1].transitions.append(tr)
        return out

    def subset(self, n: int) -> "TransitionDataset":
        return TransitionDataset(self.state_dim, self.action_spec, self.t[:n], self.s[:n],
                                 self.a[:n], self.s_next[:n], self.r[:n], self.source,
                                 self.behavior, self.seed)

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], state_dim: int, action_spec: ActionSpec,
                          **meta) -> "TransitionDataset":
        recs = [tr for traj in trajs for tr in traj]
        if not recs:
            raise ValueError("no transitions")
        a = np.array([tr.a for tr in recs], dtype=int if action_spec.discrete else float)
        if not action_spec.discrete:
            a = a.reshape(len(recs), action_spec.dim)
        return cls(
            state_dim, action_spec,
            t=np.array([tr.t for tr in recs], dtype=int),
            s=np.array([tr.s for tr in recs], dtype=float).reshape(len(recs), state_dim),
            a=a,
            s_next=np.array([tr.s_next for tr in recs], dtype=float).reshape(len(recs), state_dim),
            r=np.array([tr.r for tr in recs], dtype=float),
            **meta,
        )

    # ----- text format

    def save(self, path: str | Path) -> None:
        hdr = (f"oee-dataset v1 ds={self.state_dim} da={self.action_spec.token()} source={self.source}"
               f" behavior={self.behavior or 'NA'} seed={'NA' if self.seed is None else self.seed}")
        if not self.action_spec.discrete:
            hdr += f" alow={self.action_spec.low!r} ahigh={self.action_spec.high!r}"
        lines = [hdr]
        for i in range(len(self)):
            a = [str(int(self.a[i]))] if self.action_spec.discrete else [f"{v:.17g}" for v in self.a[i]]
            cols = ([str(int(self.t[i]))] + [f"{v:.17g}" for v in self.s[i]] + a
                    + [f"{v:.17g}" for v in self.s_next[i]] + [f"{float(self.r[i]):.17g}"])
            lines.append(",".join(cols))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TransitionDataset":
        text = Path(path).read_text().splitlines()
        head = text[0].split()
        if head[:2] != ["oee-dataset", "v1"]:
            raise ValueError(f"{path}: not an oee-dataset v1 file")
        meta = dict(tok.split("=", 1) for tok in head[2:])
        ds = int(meta["ds"])
        spec = ActionSpec.parse(meta["da"], float(meta.get("alow", 0.0)), float(meta.get("ahigh", 1.0)))
        rows = np.array([[float(v) for v in ln.split(",")] for ln in text[1:] if ln.strip()])
        if rows.size == 0:
            raise ValueError(f"{path}: no records")
        da = spec.width
        expect = 1 + 2 * ds + da + 1
        if rows.shape[1] != expect:
            raise DimensionError(f"{path}: expected {expect} columns, found {rows.shape[1]}")
        a = rows[:, 1 + ds:1 + ds + da]
        return cls(
            ds, spec,
            t=rows[:, 0].astype(int),
            s=rows[:, 1:1 + ds],
            a=a[:, 0].astype(int) if spec.discrete else a,
            s_next=rows[:, 1 + ds + da:1 + 2 * ds + da],
            r=rows[:, -1],
            source=meta["source"],
            behavior="" if meta.get("behavior", "NA") == "NA" else meta["behavior"],
            seed=None if meta.get("seed", "NA") == "NA" else int(meta["seed"]),
        )


def collect_dataset(env: Environment, policy: Policy, n_transitions: int, seed: int, source: str,
                    horizon: int) -> TransitionDataset:
    """Roll out ``policy`` until ``n_transitions`` records exist (the last
    trajectory is cut short if needed)."""
    if n_transitions < 1:
        raise ValueError("n_transitions must be positive")
    spec = DiscountSpec(1.0, horizon)
    trajs, count, i = [], 0, 0
    while count < n_transitions:
        traj = rollout(env, policy, spec, stream(seed, i))
        keep = traj.transitions[: n_transitions - count]
        trajs.append(Trajectory(keep))
        count += len(keep)
        i += 1
    return TransitionDataset.from_trajectories(trajs, env.state_dim, env.action_spec, source=source,
                                               behavior=policy.describe(), seed=seed)
