"""Finite-sample error bounds for the ratio estimator and the return estimate.

``mode="main"`` evaluates the headline estimation bound

    M = K e^{D_inf} ( sqrt(1/n) (mu + max(log mu, -log nu)) + sqrt(2 log(1/delta) / n) )

``mode="supplementary"`` evaluates the longer derivation's variant,

    M = 8 K e^{D_inf} sqrt(1/n) ( mu + max(log mu, -log nu) + mu sqrt(2 log(1/delta)) )

The two differ in the prefactor, in the ``mu`` on the confidence term and in
whether that term is divided by ``n``; both are offered rather than guessing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoundInputs:
    nu: float
    mu: float
    n: int
    delta: float
    K: float = 1.0
    d_inf: float = 0.0
    T: int = 1
    gamma: float = 0.99
    R: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0 < self.mu:
            raise ValueError(f"need 0 < nu < 1 < mu, got nu={self.nu}, mu={self.mu}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n < 1 or self.K < 1 or self.d_inf < 0 or self.T < 1:
            raise ValueError("need n >= 1, K >= 1, d_inf >= 0, T >= 1")


@dataclass
class BoundReport:
    M: float
    zeta_err: float
    return_err_sq: float
    mode: str = "main"
    notes: list[str] = field(default_factory=list)

    CSV_HEADER = "mode,M,zeta_err,return_err_sq"

    def csv_row(self) -> str:
        return f"{self.mode},{self.M:.17g},{self.zeta_err:.17g},{self.return_err_sq:.17g}"

    def text(self) -> str:
        lines = [f"M = {self.M:.6g}", f"zeta error bound = {self.zeta_err:.6g}",
                 f"squared return error bound = {self.return_err_sq:.6g}", f"mode = {self.mode}"]
        return "\n".join(lines + [f"note: {n}" for n in self.notes])


def theorem_51_bound(b: BoundInputs, mode: str = "main") -> float:
    """Upper bound ``M`` on ``||g_hat - g*||_inf^2`` holding with probability ``1 - delta``."""
    if not 0.0 < b.delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    cap = b.mu + max(math.log(b.mu), -math.log(b.nu))
    conf = math.sqrt(2.0 * math.log(1.0 / b.delta))
    scale = b.K * math.exp(b.d_inf)
    if mode == "main":
        return scale * (math.sqrt(1.0 / b.n) * cap + conf / math.sqrt(b.n))
    if mode == "supplementary":
        return 8.0 * scale * math.sqrt(1.0 / b.n) * (cap + b.mu * conf)
    raise ValueError(f"unknown mode {mode!r}")


def zeta_error_bound(b: BoundInputs, M: float) -> float:
    if M < 0:
        raise ValueError("M must be nonnegative")
    return b.mu * (1.0 + b.nu * b.mu) / b.nu**2 * M / b.n**0.25


# the closed forms divide by (1 - r)^2 and lose digits as r -> 1; sum explicitly there
_NEAR_ONE = 1e-3


def agp_sum(r: float, T: int) -> float:
    """``sum_{t=1}^T t r^t`` in closed form."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if r == 1.0:
        return T * (T + 1) / 2.0
    if abs(r - 1.0) < _NEAR_ONE:
        return agp_loop(r, T)
    return (r - (T + 1) * r ** (T + 1) + T * r ** (T + 2)) / (1.0 - r) ** 2


def agp_loop(r: float, T: int) -> float:
    return float(sum(t * r**t for t in range(1, T + 1)))


def _agp_factor(r: float, T: int) -> float:
    # (1 - (T+1) r^T + T r^{T+1}) / (1 - r)^2 == sum_{t=1}^T t r^{t-1}
    if abs(r - 1.0) < 1e-9:
        return T * (T + 1) / 2.0
    if abs(r - 1.0) < _NEAR_ONE:
        return float(sum(t * r ** (t - 1) for t in range(1, T + 1)))
    return (1.0 - (T + 1) * r**T + T * r ** (T + 1)) / (1.0 - r) ** 2


def return_error_bound(b: BoundInputs, M: float) -> float:
    """Bound on the squared return error over horizon ``T`` (exponential in ``T`` when gamma > nu)."""
    if b.gamma == 0.0:
        return 0.0
    r = b.gamma / b.nu
    lead = b.T * M**2 * b.R**2 * b.gamma / (b.nu * math.sqrt(b.n))
    return lead * _agp_factor(r, b.T)


def product_error_bound(x, eps) -> float:
    """First-order bound ``prod(x) * sum(eps / x)`` on the error of a product."""
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x.shape != eps.shape:
        raise ValueError("values and errors differ in length")
    if np.any(x == 0):
        raise ValueError("every factor must be nonzero")
    return float(np.prod(x) * np.sum(eps / x))


def renyi_inf_divergence_tabular(p, q) -> float:
    """``log max_x P(x)/Q(x)`` over atoms with ``P(x) > 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("tables differ in shape")
    on = p > 0
    if np.any(q[on] <= 0):
        raise ValueError("P puts mass where Q has none")
    return float(np.log(np.max(p[on] / q[on])))


def inverse_min_mass(q, p=None) -> float:
    """``K = 1 / min Q(x)`` over the atoms in use (those with ``P > 0`` when ``p`` is given)."""
    q = np.asarray(q, dtype=float)
    used = q > 0 if p is None else np.asarray(p, dtype=float) > 0
    return float(1.0 / np.min(q[used]))


def bound_report(b: BoundInputs, mode: str = "main") -> BoundReport:
    M = theorem_51_bound(b, mode)
    rep = BoundReport(M, zeta_error_bound(b, M), return_error_bound(b, M), mode)
    r = b.gamma / b.nu
    if abs(r - 1.0) < 1e-9:
        rep.notes.append("gamma/nu == 1: AGP factor replaced by its limit T(T+1)/2")
    elif r > 1.0:
        rep.notes.append(f"gamma/nu = {r:.4g} > 1: the return bound grows exponentially with T")
    return rep
