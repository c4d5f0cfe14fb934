"""Cross-entropy search for a deterministic linear-threshold cart-pole controller."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from oee.core import DiscountSpec, Policy, monte_carlo_return
from oee.rng import child_seed, stream


class CemError(RuntimeError):
    pass


@dataclass(frozen=True)
class CemConfig:
    population: int = 40
    elite: int = 8
    generations: int = 30
    episodes: int = 5  # per candidate
    horizon: int = 100
    init_std: float = 1.0
    extra_std: float = 0.05  # added each generation so the search does not collapse early
    target: float = 95.0
    eval_episodes: int = 100


def threshold_policy(env, theta: np.ndarray) -> Policy:
    """``a = [w . s + b > 0]`` with ``theta = (w, b)``."""
    theta = np.asarray(theta, dtype=float)
    return Policy("expert-linear", env.action_spec, weights=theta[:-1].copy(), bias=float(theta[-1]),
                  state_dim=env.state_dim)


def mean_episode_length(env, policy: Policy, episodes: int, horizon: int, seed: int) -> float:
    # gamma = 1 and reward 1 per step: the return is the episode length
    return monte_carlo_return(env, policy, DiscountSpec(1.0, horizon, episodes), seed).mean


def cem_train_expert(env, config: CemConfig = CemConfig(), seed: int = 0) -> Policy:
    if env.action_spec.n != 2:
        raise ValueError("the threshold controller needs exactly two actions")
    d = env.state_dim + 1
    mean, std = np.zeros(d), np.full(d, config.init_std)
    rng = stream(seed, 0)
    best_score, best_theta = -np.inf, mean
    for gen in range(config.generations):
        pop = mean + std * rng.standard_normal((config.population, d))
        # common random numbers within a generation make candidates comparable
        eval_seed = child_seed(seed, 1, gen)
        scores = np.array([mean_episode_length(env, threshold_policy(env, th), config.episodes, config.horizon,
                                               eval_seed) for th in pop])
        elite = pop[np.argsort(-scores, kind="stable")[: config.elite]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0) + config.extra_std
        if scores.max() > best_score:
            best_score, best_theta = float(scores.max()), pop[int(np.argmax(scores))]
        if scores.max() >= config.horizon:
            policy = threshold_policy(env, mean)
            score = mean_episode_length(env, policy, config.eval_episodes, config.horizon, child_seed(seed, 2))
            if score >= config.target:
                return policy
    raise CemError(f"no controller reached {config.target} after {config.generations} generations; "
                   f"best candidate averaged {best_score:.1f} steps with parameters {np.round(best_theta, 3).tolist()}")
