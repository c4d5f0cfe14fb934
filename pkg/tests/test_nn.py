import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oee import nn
from oee.rng import stream


def small_net(seed, d=3, hidden=(6, 5, 4), nu=0.2, mu=5.0):
    p = nn.init_mlp(d, hidden, nu, mu, stream(seed))
    rng = stream(seed, 1)
    # random nonzero biases so ReLU patterns vary
    for b in p.biases:
        b[...] = rng.normal(0, 0.5, size=b.shape)
    return p


def fd_gradient(params, f, h=1e-6):
    theta = params.flat()
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (f(params.with_flat(tp)) - f(params.with_flat(tm))) / (2 * h)
    return g


def test_zero_params_give_midpoint():
    p = nn.init_mlp(4, (8, 8, 8), 0.1, 10.0)
    p = p.with_flat(np.zeros_like(p.flat()))
    assert nn.mlp_forward(p, np.ones((3, 4))) == pytest.approx(np.full(3, 5.05))


def test_saturates_at_mu():
    p = nn.init_mlp(1, (2, 2, 2), 0.1, 10.0)
    p = p.with_flat(np.zeros_like(p.flat()))
    p.biases[-1][0] = 50.0
    assert nn.mlp_forward(p, [[0.0]])[0] == pytest.approx(10.0)
    vals = []
    for z in [0, 1, 2, 4, 8]:
        p.biases[-1][0] = z
        vals.append(nn.mlp_forward(p, [[0.0]])[0])
    assert np.all(np.diff(vals) > 0)


def test_output_range_random():
    rng = stream(3)
    for k in range(100):
        p = nn.init_mlp(5, (16, 16, 16), 0.1, 10.0, stream(3, k))
        out = nn.mlp_forward(p, rng.normal(0, 3, size=(100, 5)))
        assert np.all((out >= 0.1) & (out <= 10.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(0.01, 0.99), st.floats(1.01, 100))
def test_range_invariant(seed, xval, nu, mu):
    p = nn.init_mlp(2, (8, 8, 8), nu, mu, stream(seed))
    out = nn.mlp_forward(p, np.full((4, 2), xval))
    assert np.all((out >= nu) & (out <= mu))


def test_dimension_mismatch():
    p = nn.init_mlp(3)
    with pytest.raises(ValueError):
        nn.mlp_forward(p, np.zeros((2, 4)))


def test_backward_matches_finite_differences():
    rng = stream(99)
    worst = 0.0
    for k in range(100):
        p = small_net(k)
        x = rng.normal(size=(4, 3))
        up = rng.normal(size=4)
        analytic = nn.mlp_backward(p, x, up).flat()
        numeric = fd_gradient(p, lambda q: float(up @ nn.mlp_forward(q, x)))
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        worst = max(worst, rel)
    assert worst < 1e-5


def test_zero_upstream_gives_zero_buffer():
    p = small_net(1)
    g = nn.mlp_backward(p, np.ones((2, 3)), np.zeros(2))
    assert not np.any(g.flat())


def test_dead_relu_unit_has_zero_incoming_gradient():
    p = small_net(2)
    p.weights[0][0, :] = 0.0
    p.biases[0][0] = -1.0  # unit 0 of layer 1 is dead for every input
    g = nn.mlp_backward(p, stream(2).normal(size=(5, 3)), np.ones(5))
    assert not np.any(g.weights[0][0]) and g.biases[0][0] == 0.0


def test_sgd_update_arithmetic():
    p = nn.init_mlp(1, (1, 1, 1), 0.5, 2.0)
    p = p.with_flat(np.ones_like(p.flat()))
    g = nn.GradientBuffer.zeros_like(p)
    g.weights[0][0, 0] = 2.0
    q = nn.sgd_update(p, g, 0.1)
    assert q.weights[0][0, 0] == pytest.approx(0.8)
    assert np.array_equal(nn.sgd_update(p, g, 0.0).flat(), p.flat())


def test_sgd_rejects_non_finite():
    p = nn.init_mlp(2)
    g = nn.GradientBuffer.zeros_like(p)
    g.biases[1][0] = np.nan
    with pytest.raises(nn.TrainingDivergence):
        nn.sgd_update(p, g, 0.1)


def test_one_step_descent():
    p = small_net(5)
    x = np.array([[0.3, -0.2, 1.0]])
    loss = lambda q: float((nn.mlp_forward(q, x)[0] - 3.0) ** 2)  # noqa: E731
    g_out = nn.mlp_forward(p, x)[0]
    grads = nn.mlp_backward(p, x, [2 * (g_out - 3.0)])
    assert loss(nn.sgd_update(p, grads, 1e-3)) < loss(p)


def test_update_determinism():
    def run():
        p = nn.init_mlp(3, (8, 8, 8), rng=stream(4))
        rng = stream(4, 1)
        for _ in range(10):
            x = rng.normal(size=(16, 3))
            p = nn.sgd_update(p, nn.mlp_backward(p, x, np.ones(16)), 0.01)
        return p.flat()

    assert np.array_equal(run(), run())


def test_model_file_roundtrip(tmp_path):
    p = nn.init_mlp(3, (4, 5, 6), 0.1, 10.0, stream(8))
    nn.save_mlp(p, tmp_path / "m.txt")
    q, meta = nn.load_mlp(tmp_path / "m.txt")
    assert (tmp_path / "m.txt").read_text().startswith("oee-model v1 kind=mlp din=3 h=4,5,6 nu=0.1 mu=10.0")
    np.testing.assert_allclose(q.flat(), p.flat(), rtol=1e-12)
