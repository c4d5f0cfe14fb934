"""Pairs of 1-D normal samples with an analytic density ratio."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianPairSpec:
    p_mean: float = 2.0
    p_std: float = 1.0
    q_mean: float = 4.0
    q_std: float = 2.0
    n: int = 2000

    def __post_init__(self):
        if self.p_std <= 0 or self.q_std <= 0:
            raise ValueError("standard deviations must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")


def gaussian_pair_sample(spec: GaussianPairSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` draws from P followed by ``n`` draws from Q, each as an ``(n, 1)`` array."""
    p = rng.normal(spec.p_mean, spec.p_std, size=(spec.n, 1))
    q = rng.normal(spec.q_mean, spec.q_std, size=(spec.n, 1))
    return p, q


def true_gaussian_ratio(spec: GaussianPairSpec, x) -> np.ndarray:
    """Analytic ``p(x) / q(x)``, evaluated in log space."""
    x = np.asarray(x, dtype=float)
    log_p = -0.5 * ((x - spec.p_mean) / spec.p_std) ** 2 - np.log(spec.p_std)
    log_q = -0.5 * ((x - spec.q_mean) / spec.q_std) ** 2 - np.log(spec.q_std)
    return np.exp(log_p - log_q)
