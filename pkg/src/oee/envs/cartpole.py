"""Cart-pole with configurable gravity and additive Gaussian state noise.

State is ``(x, x_dot, theta, theta_dot)``; action 0 pushes left, 1 pushes right.
Dynamics are the usual classic-control equations integrated with one explicit
Euler step, after which i.i.d. ``N(0, noise_std^2)`` noise is added to every
coordinate. Every step taken earns reward 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from oee.core import ActionSpec


@dataclass(frozen=True)
class CartpoleSpec:
    gravity: float = 10.0
    masscart: float = 1.0
    masspole: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0
    tau: float = 0.02
    noise_std: float = 1e-3
    theta_limit: float = 12 * 2 * math.pi / 360
    x_limit: float = 2.4
    init_range: float = 0.05

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if self.tau <= 0:
            raise ValueError("timestep must be positive")


def cartpole_accel(spec: CartpoleSpec, s: np.ndarray, a: int) -> tuple[float, float]:
    """Cart and pole angular accelerations at state ``s`` under action ``a``."""
    _, _, theta, theta_dot = s
    force = spec.force_mag if int(a) == 1 else -spec.force_mag
    total_mass = spec.masscart + spec.masspole
    pml = spec.masspole * spec.half_length
    cos, sin = math.cos(theta), math.sin(theta)
    temp = (force + pml * theta_dot**2 * sin) / total_mass
    theta_acc = (spec.gravity * sin - cos * temp) / (
        spec.half_length * (4.0 / 3.0 - spec.masspole * cos**2 / total_mass))
    x_acc = temp - pml * theta_acc * cos / total_mass
    return x_acc, theta_acc


def cartpole_mean_next(spec: CartpoleSpec, s: np.ndarray, a: int) -> np.ndarray:
    x, x_dot, theta, theta_dot = s
    x_acc, theta_acc = cartpole_accel(spec, s, a)
    return np.array([
        x + spec.tau * x_dot,
        x_dot + spec.tau * x_acc,
        theta + spec.tau * theta_dot,
        theta_dot + spec.tau * theta_acc,
    ])


class Cartpole:
    state_dim = 4
    action_spec = ActionSpec(n=2)
    reward_on_arrival = False

    def __init__(self, spec: CartpoleSpec):
        self.spec = spec

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        r = self.spec.init_range
        return rng.uniform(-r, r, size=4)

    def terminal(self, s: np.ndarray) -> bool:
        return abs(s[0]) > self.spec.x_limit or abs(s[2]) > self.spec.theta_limit

    def step(self, s, a, rng: np.random.Generator) -> tuple[np.ndarray, float, bool]:
        if int(a) not in (0, 1):
            raise ValueError(f"cartpole action must be 0 or 1, got {a}")
        s_next = cartpole_mean_next(self.spec, s, a)
        # noise is drawn even when noise_std == 0 so streams line up across specs
        s_next = s_next + self.spec.noise_std * rng.standard_normal(4)
        return s_next, 1.0, self.terminal(s_next)
