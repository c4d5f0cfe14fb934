"""Transition-ratio estimators and return estimates for the target environment.

A rollout ``s_0, a_0, s_1, ...`` drawn in the simulator is reweighted by
``w_t = prod_{k=1..t} zeta(s_{k-1}, a_{k-1}, s_k)``: the reward collected at
step ``t`` is multiplied by the ratios of every transition already realised,
so the ``t = 0`` reward is never reweighted. Environments whose reward depends
on the landing state (``reward_on_arrival``) also include the transition that
produced the reward.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from oee.core import (DiscountSpec, Environment, EvaluationReport, Policy, Trajectory, TransitionDataset,
                      discounted_return, monte_carlo_return, rollout)
from oee.envs.cartpole import Cartpole
from oee.envs.gridworld import Gridworld, SupportError
from oee.ratio import FeatureMap, RatioModel
from oee.rng import stream


class EvaluationError(FloatingPointError):
    pass


@dataclass
class ZetaEstimator:
    """``kind`` is ``learned`` (two ratio models), ``oracle`` (exact ratio function) or ``unit``."""

    kind: str
    model_sas: RatioModel | None = None
    model_sa: RatioModel | None = None
    features: FeatureMap | None = None
    oracle: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind == "learned":
            if self.model_sas is None or self.model_sa is None or self.features is None:
                raise ValueError("a learned estimator needs both models and a feature map")
            if (self.model_sas.nu, self.model_sas.mu) != (self.model_sa.nu, self.model_sa.mu):
                raise ValueError("the two ratio models must share (nu, mu)")
        elif self.kind == "oracle":
            if self.oracle is None:
                raise ValueError("an oracle estimator needs a ratio function")
        elif self.kind != "unit":
            raise ValueError(f"unknown estimator kind {self.kind!r}")

    @classmethod
    def unit(cls) -> "ZetaEstimator":
        return cls("unit")

    @classmethod
    def learned(cls, model_sas: RatioModel, model_sa: RatioModel, features: FeatureMap) -> "ZetaEstimator":
        return cls("learned", model_sas, model_sa, features)

    def values(self, s, a, s_next) -> np.ndarray:
        """Batched ``zeta(s'|s,a)``; rows of ``s``, ``a``, ``s_next`` line up."""
        s = np.asarray(s, dtype=float)
        if self.kind == "unit":
            return np.ones(len(s))
        if self.kind == "oracle":
            return np.asarray(self.oracle(s, np.asarray(a), np.asarray(s_next, dtype=float)), dtype=float)
        fm = self.features
        return self.model_sas(fm.sas(s, a, s_next)) / self.model_sa(fm.sa(s, a))


def zeta_value(est: ZetaEstimator, s, a, s_next) -> float:
    s = np.asarray(s, dtype=float)[None, :]
    s_next = np.asarray(s_next, dtype=float)[None, :]
    return float(est.values(s, np.asarray([a]), s_next)[0])


def gridworld_oracle(env_tr: Gridworld, env_te: Gridworld) -> ZetaEstimator:
    """Exact ratio of the two slip kernels, vectorised over transitions."""
    if env_tr.spec.n != env_te.spec.n:
        raise ValueError("grids differ in size")
    n_s = env_tr.n_states
    # ratio_by_dir[i, a, k]: ratio for landing in dest[i, k]
    ratio = np.zeros((n_s, 4, 4))
    for i in range(n_s):
        for a in range(4):
            row_tr, row_te = env_tr.row(i, a), env_te.row(i, a)
            for k in range(4):
                j = int(env_tr.dest[i, k])
                ratio[i, a, k] = row_te.get(j, 0.0) / row_tr[j]
    n = env_tr.spec.n
    dest = env_tr.dest

    def fn(s, a, s_next):
        i = s[:, 0].astype(int) * n + s[:, 1].astype(int)
        j = s_next[:, 0].astype(int) * n + s_next[:, 1].astype(int)
        match = dest[i] == j[:, None]
        if not np.all(match.any(axis=1)):
            raise SupportError("transition outside the simulator's support")
        return ratio[i, a.astype(int), match.argmax(axis=1)]

    return ZetaEstimator("oracle", oracle=fn)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    s2 = float(np.sum(w * w))
    if s2 == 0.0:
        raise ValueError("all weights are zero")
    return float(np.sum(w)) ** 2 / s2


def trajectory_weights(traj: Trajectory, zetas: np.ndarray, on_arrival: bool = False) -> np.ndarray:
    """Per-step reward weights from the per-transition ratios ``zetas``."""
    if on_arrival:
        return np.cumprod(zetas)
    w = np.ones(len(zetas))
    if len(zetas) > 1:
        w[1:] = np.cumprod(zetas[:-1])
    return w


def _stack(trajs: list[Trajectory]):
    recs = [tr for traj in trajs for tr in traj]
    s = np.array([tr.s for tr in recs], dtype=float).reshape(len(recs), -1)
    sn = np.array([tr.s_next for tr in recs], dtype=float).reshape(len(recs), -1)
    a = np.array([tr.a for tr in recs])
    return s, a, sn


def simulator_rollouts(env_tr: Environment, policy: Policy, spec: DiscountSpec, seed: int) -> list[Trajectory]:
    """Rollout ``i`` uses ``stream(seed, i)``, the same streams as :func:`oee.core.monte_carlo_return`."""
    return [rollout(env_tr, policy, spec, stream(seed, i)) for i in range(spec.n_rollouts)]


def reweighted_return(trajs: list[Trajectory], zeta: ZetaEstimator, spec: DiscountSpec, seed: int | None = None,
                      estimator: str = "OEE", on_arrival: bool = False) -> EvaluationReport:
    """Weighted returns of already collected simulator rollouts."""
    s, a, sn = _stack(trajs)
    z = zeta.values(s, a, sn) if len(s) else np.empty(0)
    values = np.empty(len(trajs))
    final = np.empty(len(trajs))
    pos = 0
    for i, traj in enumerate(trajs):
        zt = z[pos:pos + len(traj)]
        pos += len(traj)
        with np.errstate(over="ignore"):
            w = trajectory_weights(traj, zt, on_arrival)
        bad = np.flatnonzero(~np.isfinite(w))
        if bad.size:
            raise EvaluationError(f"rollout {i}: weight overflowed at t={int(bad[0])}")
        values[i] = discounted_return(traj.rewards, spec.gamma, w)
        final[i] = float(np.prod(zt)) if len(zt) else 1.0
    return EvaluationReport(estimator, values, spec.gamma, spec.horizon, seed=seed,
                            ess=effective_sample_size(final))


def oee_return(env_tr: Environment, policy: Policy, zeta: ZetaEstimator, spec: DiscountSpec, seed: int,
               estimator: str = "OEE") -> EvaluationReport:
    """Target-environment return estimated from reweighted simulator rollouts."""
    trajs = simulator_rollouts(env_tr, policy, spec, seed)
    return reweighted_return(trajs, zeta, spec, seed, estimator, getattr(env_tr, "reward_on_arrival", False))


def simulated_baseline(env_tr: Environment, policy: Policy, spec: DiscountSpec, seed: int) -> EvaluationReport:
    return monte_carlo_return(env_tr, policy, spec, seed, estimator="Simulated")


def is_ope_baseline(dataset_te: TransitionDataset, target: Policy, behavior: Policy, spec: DiscountSpec,
                    per_decision: bool = False) -> EvaluationReport:
    """Policy-ratio importance sampling over logged target-environment trajectories.

    By default every reward of a trajectory is scaled by the full-trajectory
    likelihood ratio; ``per_decision`` uses only the ratios up to the reward's step.
    """
    trajs = dataset_te.trajectories()
    values = np.empty(len(trajs))
    final = np.empty(len(trajs))
    for i, traj in enumerate(trajs):
        steps = traj.transitions[: spec.horizon]
        rho = np.empty(len(steps))
        for k, tr in enumerate(steps):
            pb = behavior.prob(tr.s, tr.a)
            if pb <= 0.0:
                raise SupportError(f"behavior policy gives zero probability to observed action {tr.a} at {tr.s}")
            rho[k] = target.prob(tr.s, tr.a) / pb
        cum = np.cumprod(rho)
        w = cum if per_decision else np.full(len(steps), cum[-1] if len(cum) else 1.0)
        values[i] = discounted_return([tr.r for tr in steps], spec.gamma, w)
        final[i] = cum[-1] if len(cum) else 1.0
    rep = EvaluationReport("IS", values, spec.gamma, spec.horizon, seed=dataset_te.seed)
    if np.any(final > 0):
        rep.ess = effective_sample_size(final)
    else:
        rep.ess = 0.0
        rep.notes.append("every logged trajectory has zero likelihood under the target policy")
    return rep


# --------------------------------------------------------------------------- model-based baseline


class LearnedGridworld:
    """Gridworld whose kernel is a smoothed count estimate."""

    state_dim = 2
    reward_on_arrival = False

    def __init__(self, template: Gridworld, probs: np.ndarray, visited: np.ndarray):
        self.template = template
        self.action_spec = template.action_spec
        self.probs = probs  # probs[i, a, j]
        self.cdf = np.cumsum(probs, axis=2)
        self.visited = visited
        self.unvisited_hits = 0

    def reset(self, rng):
        return self.template.reset(rng)

    def step(self, s, a, rng):
        t = self.template
        i = t.index(s)
        if i == t.goal_index:
            return t.cell(i), 0.0, True
        if not self.visited[i, int(a)]:
            self.unvisited_hits += 1
        j = int(np.searchsorted(self.cdf[i, int(a)], rng.random() * self.cdf[i, int(a), -1], side="right"))
        j = min(j, t.n_states - 1)
        return t.cell(j), t.spec.step_reward, j == t.goal_index


def fit_gridworld_model(dataset: TransitionDataset, template: Gridworld, alpha: float = 1.0) -> LearnedGridworld:
    """Laplace-smoothed counts over each cell's candidate successors (itself and its neighbours)."""
    n_s = template.n_states
    counts = np.zeros((n_s, 4, n_s))
    n = template.spec.n
    i = dataset.s[:, 0].astype(int) * n + dataset.s[:, 1].astype(int)
    j = dataset.s_next[:, 0].astype(int) * n + dataset.s_next[:, 1].astype(int)
    np.add.at(counts, (i, dataset.a.astype(int), j), 1.0)
    cand = np.zeros((n_s, n_s), dtype=bool)
    for k in range(4):
        cand[np.arange(n_s), template.dest[:, k]] = True
    cand[np.arange(n_s), np.arange(n_s)] = True
    probs = (counts + alpha) * cand[:, None, :]
    probs /= probs.sum(axis=2, keepdims=True)
    visited = counts.sum(axis=2) > 0
    return LearnedGridworld(template, probs, visited)


class LinearGaussianModel:
    """Per-action affine dynamics ``s' = W_a [s, 1] + N(0, diag(sigma_a^2))``."""

    reward_on_arrival = False

    def __init__(self, template, coef: np.ndarray, resid_std: np.ndarray):
        self.template = template
        self.state_dim = template.state_dim
        self.action_spec = template.action_spec
        self.coef = coef  # (n_actions, d+1, d)
        self.resid_std = resid_std  # (n_actions, d)

    def predict(self, s, a) -> np.ndarray:
        return np.append(np.asarray(s, dtype=float), 1.0) @ self.coef[int(a)]

    def reset(self, rng):
        return self.template.reset(rng)

    def step(self, s, a, rng):
        s_next = self.predict(s, a) + self.resid_std[int(a)] * rng.standard_normal(self.state_dim)
        return s_next, 1.0, self.template.terminal(s_next)


def fit_linear_model(dataset: TransitionDataset, template) -> LinearGaussianModel:
    d = dataset.state_dim
    n_a = dataset.action_spec.n
    coef = np.zeros((n_a, d + 1, d))
    resid = np.zeros((n_a, d))
    for a in range(n_a):
        m = dataset.a == a
        if m.sum() < d + 1:
            coef[a, :d, :] = np.eye(d)
            continue
        X = np.hstack([dataset.s[m], np.ones((m.sum(), 1))])
        sol, *_ = np.linalg.lstsq(X, dataset.s_next[m], rcond=None)
        coef[a] = sol
        resid[a] = (dataset.s_next[m] - X @ sol).std(axis=0)
    return LinearGaussianModel(template, coef, resid)


def mle_baseline(dataset_te: TransitionDataset, env_template, policy: Policy, spec: DiscountSpec, seed: int,
                 alpha: float = 1.0) -> EvaluationReport:
    """Fit a dynamics model on the target data, then run Monte Carlo in it."""
    if len(dataset_te) == 0:
        raise ValueError("dataset is empty")
    if isinstance(env_template, Gridworld):
        model = fit_gridworld_model(dataset_te, env_template, alpha)
    elif isinstance(env_template, Cartpole):
        model = fit_linear_model(dataset_te, env_template)
    else:
        raise TypeError(f"no model-based baseline for {type(env_template).__name__}")
    rep = monte_carlo_return(model, policy, spec, seed, estimator="MLE")
    hits = getattr(model, "unvisited_hits", 0)
    if hits:
        rep.notes.append(f"{hits} steps hit (s,a) pairs absent from the data; uniform fallback used")
    return rep
