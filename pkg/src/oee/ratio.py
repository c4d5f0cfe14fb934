"""Density-ratio estimation by minimising the empirical dual-KL risk.

For samples ``x_p ~ P`` and ``x_q ~ Q`` the estimator minimises

    mean_q g(x_q) - mean_p log g(x_p) + lam/2 * I(g)^2

over bounded positive functions ``g``; the population minimiser is ``P/Q``.
The linear term always runs over the Q (denominator, simulator) samples and the
log term over the P (numerator, target) samples.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from oee import nn
from oee.core import TransitionDataset
from oee.rng import child_seed, stream


class TrainingError(RuntimeError):
    pass


class SaturationWarning(UserWarning):
    """Many outputs sit on a clamp bound, so P/Q is probably outside [nu, mu]."""


@dataclass
class TrainConfig:
    function_class: str = "mlp"  # "mlp" or "tabular"
    batch_size: int = 256  # 0 means full batch
    iterations: int = 50_000
    lr: float = 1e-5
    lam: float | None = None  # None: 1e-4 for mlp, 0 for tabular
    nu: float = 0.1
    mu: float = 10.0
    seed: int = 0
    eval_every: int = 500
    hidden: tuple[int, ...] = (64, 64, 64)
    standardize: bool = True
    start_at_one: bool = False  # mlp only: begin from the constant ratio 1 (see nn.init_mlp)

    def __post_init__(self):
        if self.function_class not in ("mlp", "tabular"):
            raise ValueError(f"unknown function class {self.function_class!r}")
        if self.batch_size < 0 or self.iterations < 1:
            raise ValueError("batch_size must be >= 0 and iterations >= 1")
        if not 0.0 < self.nu < 1.0 < self.mu:
            raise ValueError("need 0 < nu < 1 < mu")

    @property
    def reg(self) -> float:
        if self.lam is not None:
            return self.lam
        return 1e-4 if self.function_class == "mlp" else 0.0


@dataclass
class TrainInfo:
    n_p: int = 0
    n_q: int = 0
    iterations: int = 0
    seed: int = 0
    curve: list[tuple[int, float]] = field(default_factory=list)

    def curve_csv(self) -> str:
        return "iteration,loss\n" + "".join(f"{i},{v:.17g}\n" for i, v in self.curve)


# --------------------------------------------------------------------------- models


class RatioModel:
    """Bounded positive function ``g: R^d -> [nu, mu]``."""

    domain: str
    nu: float
    mu: float
    lam: float
    info: TrainInfo

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def reg_sq(self) -> float:
        """``I(g)^2`` for the regulariser."""
        raise NotImplementedError

    def save(self, path: str | Path) -> None:
        raise NotImplementedError


def _key_rows(x: np.ndarray) -> list[tuple]:
    return [tuple(row) for row in np.round(np.asarray(x, dtype=float), 9).tolist()]


class TabularRatio(RatioModel):
    """One free value per distinct input row; unseen rows evaluate to 1."""

    def __init__(self, keys: list[tuple], values: np.ndarray, nu: float, mu: float, domain: str = "x",
                 lam: float = 0.0, info: TrainInfo | None = None):
        self.keys = list(keys)
        self.values = np.asarray(values, dtype=float)
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.nu, self.mu, self.domain, self.lam = nu, mu, domain, lam
        self.info = info or TrainInfo()

    def atoms(self, x) -> np.ndarray:
        """Table index of each row, -1 when unseen."""
        return np.array([self.index.get(k, -1) for k in _key_rows(x)], dtype=int)

    def __call__(self, x) -> np.ndarray:
        idx = self.atoms(x)
        out = np.ones(len(idx))
        seen = idx >= 0
        out[seen] = self.values[idx[seen]]
        return np.clip(out, self.nu, self.mu)

    def reg_sq(self) -> float:
        return float(np.sum((self.values - 1.0) ** 2))

    def save(self, path: str | Path) -> None:
        d = len(self.keys[0]) if self.keys else 0
        lines = [f"oee-model v1 kind=tabular din={d} nu={self.nu!r} mu={self.mu!r} domain={self.domain}"]
        for k, v in zip(self.keys, self.values):
            lines.append(",".join(f"{c:.17g}" for c in k) + f" {v:.17g}")
        Path(path).write_text("\n".join(lines) + "\n")


class MlpRatio(RatioModel):
    def __init__(self, params: nn.MlpParams, shift: np.ndarray | None = None, scale: np.ndarray | None = None,
                 domain: str = "x", lam: float = 1e-4, info: TrainInfo | None = None):
        self.params = params
        d = params.d_in
        self.shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
        self.scale = np.ones(d) if scale is None else np.asarray(scale, dtype=float)
        self.domain, self.lam = domain, lam
        self.info = info or TrainInfo()

    @property
    def nu(self) -> float:
        return self.params.nu

    @property
    def mu(self) -> float:
        return self.params.mu

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.params.d_in == 1 else x[None, :]
        return (x - self.shift) / self.scale

    def __call__(self, x) -> np.ndarray:
        return np.clip(nn.mlp_forward(self.params, self.encode(x)), self.nu, self.mu)

    def reg_sq(self) -> float:
        return self.params.sq_norm()

    def save(self, path: str | Path) -> None:
        fmt = lambda a: ",".join(f"{v:.17g}" for v in a)  # noqa: E731
        nn.save_mlp(self.params, path, extra=f"domain={self.domain} lam={self.lam!r} "
                                             f"shift={fmt(self.shift)} scale={fmt(self.scale)}")


def load_ratio_model(path: str | Path) -> RatioModel:
    lines = Path(path).read_text().splitlines()
    meta = nn.parse_header(lines[0])
    if meta["kind"] == "mlp":
        params, meta = nn.load_mlp(path)
        vec = lambda s: np.array([float(v) for v in s.split(",")])  # noqa: E731
        return MlpRatio(params, vec(meta["shift"]), vec(meta["scale"]), meta.get("domain", "x"),
                        float(meta.get("lam", 0.0)))
    if meta["kind"] == "tabular":
        keys, vals = [], []
        for ln in lines[1:]:
            if ln.strip():
                k, v = ln.split()
                keys.append(tuple(float(c) for c in k.split(",")))
                vals.append(float(v))
        return TabularRatio(keys, np.array(vals), float(meta["nu"]), float(meta["mu"]), meta.get("domain", "x"))
    raise ValueError(f"{path}: unknown model kind {meta['kind']!r}")


# --------------------------------------------------------------------------- loss


def _check_batches(batch_p, batch_q):
    if len(batch_p) == 0 or len(batch_q) == 0:
        raise ValueError("both batches must be nonempty")


def empirical_dual_loss(g: Callable, batch_p, batch_q, lam: float = 0.0, reg_sq: float | None = None) -> float:
    """``mean g(x_q) - mean log g(x_p) + lam/2 * I(g)^2``.

    ``g`` is any positive callable; for a ``RatioModel`` the penalty uses its
    own ``reg_sq()`` unless ``reg_sq`` is given.
    """
    _check_batches(batch_p, batch_q)
    if reg_sq is None:
        reg_sq = g.reg_sq() if isinstance(g, RatioModel) else 0.0
    gq = np.asarray(g(batch_q), dtype=float)
    gp = np.asarray(g(batch_p), dtype=float)
    return float(np.mean(gq) - np.mean(np.log(gp)) + 0.5 * lam * reg_sq)


def loss_gradient(model: RatioModel, batch_p, batch_q, lam: float = 0.0):
    """Gradient of :func:`empirical_dual_loss`.

    Returns a ``GradientBuffer`` for an MLP and an array aligned with
    ``model.values`` for a table (derivative with respect to the stored values).
    """
    _check_batches(batch_p, batch_q)
    if isinstance(model, MlpRatio):
        xq, xp = model.encode(batch_q), model.encode(batch_p)
        nq, npp = len(xq), len(xp)
        x = np.vstack([xq, xp])

        def upstream(gv):
            u = np.empty_like(gv)
            u[:nq] = 1.0 / nq
            u[nq:] = -1.0 / (npp * gv[nq:])
            return u

        _, grads = nn.forward_backward(model.params, x, upstream)
        return grads.add_scaled(model.params, lam) if lam else grads
    if isinstance(model, TabularRatio):
        pq, pp = _atom_freqs(model, batch_q), _atom_freqs(model, batch_p)
        return pq - pp / model.values + lam * (model.values - 1.0)
    raise TypeError(f"no gradient for {type(model).__name__}")


def _atom_freqs(model: TabularRatio, x) -> np.ndarray:
    idx = model.atoms(x)
    if np.any(idx < 0):
        raise ValueError("batch contains rows missing from the table")
    return np.bincount(idx, minlength=len(model.keys)) / len(idx)


# --------------------------------------------------------------------------- training


def _saturation_check(model: RatioModel, xs: list[np.ndarray], limit: float = 0.01) -> float:
    vals = np.concatenate([model(x) for x in xs])
    tol = 1e-6 * model.mu
    frac = float(np.mean((vals <= model.nu + tol) | (vals >= model.mu - tol)))
    if frac > limit:
        warnings.warn(f"{frac:.1%} of {model.domain} ratio outputs sit on a clamp bound "
                      f"[{model.nu}, {model.mu}]; the true ratio may fall outside the function class",
                      SaturationWarning, stacklevel=3)
    return frac


def train_ratio(samples_p, samples_q, config: TrainConfig, domain: str = "x") -> RatioModel:
    """Fit ``g ~ P/Q`` from samples of P (numerator) and Q (denominator)."""
    xp = np.asarray(samples_p, dtype=float)
    xq = np.asarray(samples_q, dtype=float)
    if xp.ndim == 1:
        xp, xq = xp[:, None], xq[:, None]
    if len(xp) == 0 or len(xq) == 0:
        raise ValueError("both sample sets must be nonempty")
    if xp.shape[1] != xq.shape[1]:
        raise ValueError("P and Q samples have different dimensions")
    if config.function_class == "tabular":
        model = _train_tabular(xp, xq, config, domain)
    else:
        model = _train_mlp(xp, xq, config, domain)
    _saturation_check(model, [xp, xq])
    return model


def _train_tabular(xp, xq, config: TrainConfig, domain: str) -> TabularRatio:
    """Diagonally preconditioned gradient descent on ``log g``.

    Each atom's step is its log-space gradient ``Q g - P + lam g (g-1)``
    divided by a local curvature proxy ``(Q g + P)/2 + lam g^2``, which makes
    the step size independent of how much probability mass the atom carries.
    With ``lr = 1`` and full batches the iteration contracts monotonically to
    ``clamp(P/Q, nu, mu)``.
    """
    keys_all = _key_rows(np.vstack([xp, xq]))
    keys = sorted(set(keys_all))
    index = {k: i for i, k in enumerate(keys)}
    atom = np.array([index[k] for k in keys_all])
    ap, aq = atom[: len(xp)], atom[len(xp):]
    m = len(keys)
    lam = config.reg
    lo, hi = math.log(config.nu), math.log(config.mu)
    theta = np.zeros(m)
    rng = stream(config.seed, 0)
    info = TrainInfo(len(xp), len(xq), config.iterations, config.seed)
    full_p = np.bincount(ap, minlength=m) / len(ap)
    full_q = np.bincount(aq, minlength=m) / len(aq)

    def full_loss(th):
        g = np.exp(th)
        return float(full_q @ g - full_p @ th + 0.5 * lam * np.sum((g - 1.0) ** 2))

    for it in range(config.iterations):
        if it % config.eval_every == 0:
            info.curve.append((it, full_loss(theta)))
        if config.batch_size:
            bp = ap[rng.integers(0, len(ap), config.batch_size)]
            bq = aq[rng.integers(0, len(aq), config.batch_size)]
            fp = np.bincount(bp, minlength=m) / config.batch_size
            fq = np.bincount(bq, minlength=m) / config.batch_size
        else:
            fp, fq = full_p, full_q
        g = np.exp(theta)
        num = fq * g - fp + lam * g * (g - 1.0)
        den = 0.5 * (fq * g + fp) + lam * g * g
        step = np.divide(num, den, out=np.zeros(m), where=den > 0)
        theta = np.clip(theta - config.lr * step, lo, hi)
        if not np.all(np.isfinite(theta)):
            raise TrainingError(f"non-finite table values at iteration {it}")
    info.curve.append((config.iterations, full_loss(theta)))
    return TabularRatio(keys, np.exp(theta), config.nu, config.mu, domain, lam, info)


def _train_mlp(xp, xq, config: TrainConfig, domain: str) -> MlpRatio:
    d = xp.shape[1]
    if config.standardize:
        pooled = np.vstack([xp, xq])
        shift = pooled.mean(axis=0)
        scale = pooled.std(axis=0)
        scale[scale < 1e-12] = 1.0
    else:
        shift, scale = np.zeros(d), np.ones(d)
    params = nn.init_mlp(d, config.hidden, config.nu, config.mu, stream(config.seed, 0),
                         output_at=1.0 if config.start_at_one else None)
    lam = config.reg
    model = MlpRatio(params, shift, scale, domain, lam)
    zp, zq = model.encode(xp), model.encode(xq)
    rng = stream(config.seed, 1)
    info = TrainInfo(len(xp), len(xq), config.iterations, config.seed)
    # loss curve evaluated on a fixed subsample to keep it cheap
    ev = stream(config.seed, 2)
    ep = zp[ev.integers(0, len(zp), min(len(zp), 4096))]
    eq = zq[ev.integers(0, len(zq), min(len(zq), 4096))]

    def curve_loss(p):
        gq = nn.mlp_forward(p, eq)
        gp = nn.mlp_forward(p, ep)
        return float(np.mean(gq) - np.mean(np.log(gp)) + 0.5 * lam * p.sq_norm())

    bs = config.batch_size
    for it in range(config.iterations):
        if it % config.eval_every == 0:
            loss = curve_loss(params)
            if not math.isfinite(loss):
                raise TrainingError(f"loss became non-finite at iteration {it}")
            info.curve.append((it, loss))
        if bs:
            bq = zq[rng.integers(0, len(zq), bs)]
            bp = zp[rng.integers(0, len(zp), bs)]
        else:
            bq, bp = zq, zp
        nq, npp = len(bq), len(bp)

        def upstream(gv):
            u = np.empty_like(gv)
            u[:nq] = 1.0 / nq
            u[nq:] = -1.0 / (npp * gv[nq:])
            return u

        _, grads = nn.forward_backward(params, np.vstack([bq, bp]), upstream)
        if lam:
            grads = grads.add_scaled(params, lam)
        try:
            params = nn.sgd_update(params, grads, config.lr)
        except nn.TrainingDivergence as exc:
            raise TrainingError(f"training diverged at iteration {it}: {exc}") from None
    final = curve_loss(params)
    if not math.isfinite(final):
        raise TrainingError(f"loss became non-finite at iteration {config.iterations}")
    info.curve.append((config.iterations, final))
    model.params = params
    model.info = info
    return model


# --------------------------------------------------------------------------- features & zeta pair


@dataclass(frozen=True)
class FeatureMap:
    """Turns ``(s, a)`` and ``(s, a, s')`` columns into model inputs.

    ``one_hot`` expands discrete actions; ``delta_next`` feeds ``s' - s``
    instead of ``s'`` (a shift by ``s`` has unit Jacobian, so the density
    ratio is unchanged).
    """

    n_actions: int | None = None
    one_hot: bool = False
    delta_next: bool = False

    def _actions(self, a) -> np.ndarray:
        a = np.asarray(a)
        if self.one_hot and self.n_actions:
            return np.eye(self.n_actions)[a.astype(int).reshape(-1)]
        return a.reshape(len(a), -1).astype(float)

    def sa(self, s, a) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.hstack([s.reshape(len(s), -1), self._actions(a)])

    def sas(self, s, a, s_next) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(len(s), -1)
        sn = np.asarray(s_next, dtype=float).reshape(len(s), -1)
        return np.hstack([s, self._actions(a), sn - s if self.delta_next else sn])

    def token(self) -> str:
        return f"oee-features v1 n_actions={self.n_actions or 0} one_hot={int(self.one_hot)} delta_next={int(self.delta_next)}"

    @classmethod
    def parse(cls, line: str) -> "FeatureMap":
        toks = line.split()
        if toks[:2] != ["oee-features", "v1"]:
            raise ValueError("not an oee-features v1 line")
        kv = dict(t.split("=", 1) for t in toks[2:])
        return cls(int(kv["n_actions"]) or None, bool(int(kv["one_hot"])), bool(int(kv["delta_next"])))


def default_features(dataset: TransitionDataset, function_class: str) -> FeatureMap:
    if function_class == "tabular":
        return FeatureMap(dataset.action_spec.n)
    return FeatureMap(dataset.action_spec.n, one_hot=dataset.action_spec.discrete, delta_next=True)


def train_zeta_pair(dataset_te: TransitionDataset, dataset_tr: TransitionDataset, config: TrainConfig,
                    features: FeatureMap | None = None) -> tuple[RatioModel, RatioModel, FeatureMap]:
    """Train the ``(s,a,s')`` and ``(s,a)`` ratio models, target data as P and
    simulator data as Q. The two models use independent random streams."""
    if len(dataset_te) == 0 or len(dataset_tr) == 0:
        raise ValueError("both datasets must be nonempty")
    if dataset_te.state_dim != dataset_tr.state_dim or dataset_te.action_spec != dataset_tr.action_spec:
        raise ValueError("datasets disagree on state or action dimensions")
    fm = features or default_features(dataset_te, config.function_class)
    cfg_sa = _reseed(config, 0)
    cfg_sas = _reseed(config, 1)
    model_sa = train_ratio(fm.sa(dataset_te.s, dataset_te.a), fm.sa(dataset_tr.s, dataset_tr.a), cfg_sa, "sa")
    model_sas = train_ratio(fm.sas(dataset_te.s, dataset_te.a, dataset_te.s_next),
                            fm.sas(dataset_tr.s, dataset_tr.a, dataset_tr.s_next), cfg_sas, "sas")
    return model_sas, model_sa, fm


def _reseed(config: TrainConfig, k: int) -> TrainConfig:
    return replace(config, seed=child_seed(config.seed, k))
