"""Feed-forward ReLU network with a bounded scalar output and hand-written gradients.

The network maps ``x`` through three ReLU hidden layers to a pre-activation
``z`` and returns ``nu + (mu - nu) * (tanh(z) + 1) / 2``, so every output sits
in ``[nu, mu]``. All functions work on batches: ``x`` has shape ``(B, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TrainingDivergence(FloatingPointError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]  # weights[l] has shape (fan_out, fan_in)
    biases: list[np.ndarray]
    nu: float
    mu: float

    def __post_init__(self):
        if not 0.0 < self.nu < 1.0 < self.mu:
            raise ValueError(f"bounds must satisfy 0 < nu < 1 < mu, got nu={self.nu}, mu={self.mu}")
        if len(self.weights) != len(self.biases):
            raise ValueError("one bias vector per weight matrix")

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.nu, self.mu)

    def flat(self) -> np.ndarray:
        """Parameters layer by layer: row-major weights, then biases."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "MlpParams":
        out, i = self.copy(), 0
        for w, b in zip(out.weights, out.biases):
            w[...] = theta[i:i + w.size].reshape(w.shape)
            i += w.size
            b[...] = theta[i:i + b.size]
            i += b.size
        return out

    def sq_norm(self) -> float:
        return float(sum(np.sum(w * w) + np.sum(b * b) for w, b in zip(self.weights, self.biases)))


@dataclass
class GradientBuffer:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradientBuffer":
        return cls([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    def add_scaled(self, params: MlpParams, scale: float) -> "GradientBuffer":
        """``self + scale * params``, e.g. for an L2 penalty."""
        return GradientBuffer([g + scale * w for g, w in zip(self.weights, params.weights)],
                              [g + scale * b for g, b in zip(self.biases, params.biases)])


def init_mlp(d_in: int, hidden=(64, 64, 64), nu: float = 0.1, mu: float = 10.0,
             rng: np.random.Generator | None = None, output_at: float | None = None) -> MlpParams:
    """He-style uniform init, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``; zero biases.

    ``output_at`` zeroes the output layer's weights and sets its bias so the
    network starts as the constant function ``output_at``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    sizes = [d_in, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    if output_at is not None:
        if not nu < output_at < mu:
            raise ValueError(f"starting value {output_at} must lie strictly inside ({nu}, {mu})")
        weights[-1][...] = 0.0
        biases[-1][0] = np.arctanh(2.0 * (output_at - nu) / (mu - nu) - 1.0)
    return MlpParams(weights, biases, nu, mu)


@dataclass
class _Cache:
    acts: list[np.ndarray] = field(default_factory=list)  # inputs to each layer
    tanh_z: np.ndarray | None = None


def _as_batch(params: MlpParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.d_in:
        raise ValueError(f"input has {x.shape[1]} features, network expects {params.d_in}")
    return x


def _forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, _Cache]:
    cache = _Cache()
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.acts.append(h)
        h = h @ w.T + b
        if l < last:
            h = np.maximum(h, 0.0)
    cache.tanh_z = np.tanh(h[:, 0])
    g = params.nu + (params.mu - params.nu) * 0.5 * (cache.tanh_z + 1.0)
    return g, cache


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Network output for each row of ``x``."""
    return _forward(params, _as_batch(params, x))[0]


def mlp_backward(params: MlpParams, x, upstream) -> GradientBuffer:
    """Gradient of ``sum_i upstream[i] * g(x_i)`` with respect to every parameter."""
    x = _as_batch(params, x)
    _, cache = _forward(params, x)
    return _backward(params, cache, np.asarray(upstream, dtype=float).reshape(-1))


def _backward(params: MlpParams, cache: _Cache, upstream: np.ndarray) -> GradientBuffer:
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    # dg/dz of the scaled tanh
    delta = (upstream * 0.5 * (params.mu - params.nu) * (1.0 - cache.tanh_z**2))[:, None]
    for l in range(len(params.weights) - 1, -1, -1):
        a_in = cache.acts[l]
        gw[l] = delta.T @ a_in
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ params.weights[l]) * (a_in > 0.0)
    return GradientBuffer(gw, gb)


def forward_backward(params: MlpParams, x, upstream_fn) -> tuple[np.ndarray, GradientBuffer]:
    """One pass: ``g = f(x)``, then backprop ``upstream_fn(g)``."""
    x = _as_batch(params, x)
    g, cache = _forward(params, x)
    return g, _backward(params, cache, upstream_fn(g))


def sgd_update(params: MlpParams, grads: GradientBuffer, lr: float) -> MlpParams:
    for gw, gb in zip(grads.weights, grads.biases):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise TrainingDivergence("non-finite gradient")
    return MlpParams([w - lr * g for w, g in zip(params.weights, grads.weights)],
                     [b - lr * g for b, g in zip(params.biases, grads.biases)], params.nu, params.mu)


# --------------------------------------------------------------------------- persistence


def mlp_header(params: MlpParams) -> str:
    h = ",".join(str(v) for v in params.hidden)
    return f"oee-model v1 kind=mlp din={params.d_in} h={h} nu={params.nu!r} mu={params.mu!r}"


def save_mlp(params: MlpParams, path: str | Path, extra: str = "") -> None:
    body = " ".join(f"{v:.17g}" for v in params.flat())
    header = mlp_header(params) + (f" {extra}" if extra else "")
    Path(path).write_text(header + "\n" + body + "\n")


def parse_header(line: str) -> dict[str, str]:
    toks = line.split()
    if toks[:2] != ["oee-model", "v1"]:
        raise ValueError("not an oee-model v1 file")
    return dict(t.split("=", 1) for t in toks[2:])


def load_mlp(path: str | Path) -> tuple[MlpParams, dict[str, str]]:
    lines = Path(path).read_text().splitlines()
    meta = parse_header(lines[0])
    if meta.get("kind") != "mlp":
        raise ValueError(f"{path}: kind={meta.get('kind')} is not an mlp")
    hidden = tuple(int(v) for v in meta["h"].split(","))
    template = init_mlp(int(meta["din"]), hidden, float(meta["nu"]), float(meta["mu"]))
    theta = np.array([float(v) for v in " ".join(lines[1:]).split()])
    if theta.size != template.flat().size:
        raise ValueError(f"{path}: expected {template.flat().size} parameters, found {theta.size}")
    return template.with_flat(theta), meta
