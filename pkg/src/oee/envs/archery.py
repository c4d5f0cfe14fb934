"""One-step archery task.

The agent picks a launch angle ``theta`` in ``[0, pi/2]`` (radians). The arrow
lands at ``speed_term * sin(2 theta) - drift * w`` with horizontal wind
``w ~ N(wind_mean, wind_std^2)``; the bull's eye is at 0 and the reward is
minus the landing distance from it. The episode always ends after one step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from oee.core import ActionSpec
from oee.envs.gridworld import DomainError


@dataclass(frozen=True)
class ArcherySpec:
    wind_mean: float = 4.0
    wind_std: float = 2.0
    speed_term: float = 10.0
    drift: float = 0.5
    theta_low: float = 0.0
    theta_high: float = math.pi / 2

    def __post_init__(self):
        if self.wind_std <= 0:
            raise ValueError("wind std must be positive")


class Archery:
    state_dim = 1
    reward_on_arrival = True

    def __init__(self, spec: ArcherySpec):
        self.spec = spec
        self.action_spec = ActionSpec(dim=1, low=spec.theta_low, high=spec.theta_high)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(1)

    def mean_landing(self, theta: float) -> float:
        return self.spec.speed_term * math.sin(2 * theta) - self.spec.drift * self.spec.wind_mean

    def step(self, s, a, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]:
        theta = float(np.asarray(a).reshape(-1)[0])
        if not self.spec.theta_low <= theta <= self.spec.theta_high:
            raise DomainError(f"theta={theta} outside [{self.spec.theta_low}, {self.spec.theta_high}]")
        w = rng.normal(self.spec.wind_mean, self.spec.wind_std)
        x = self.spec.speed_term * math.sin(2 * theta) - self.spec.drift * w
        return np.array([x]), -abs(x), True
