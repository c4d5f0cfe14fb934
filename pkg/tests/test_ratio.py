import math
import warnings

import numpy as np
import pytest

from oee import nn
from oee.core import collect_dataset, delta_mixture
from oee.envs.gaussian import GaussianPairSpec, gaussian_pair_sample, true_gaussian_ratio
from oee.ratio import (FeatureMap, MlpRatio, SaturationWarning, TabularRatio, TrainConfig, empirical_dual_loss,
                       load_ratio_model, loss_gradient, train_ratio, train_zeta_pair)
from oee.rng import stream


def mlp_model(seed, d=2, lam=0.0):
    p = nn.init_mlp(d, (5, 4, 3), 0.2, 5.0, stream(seed))
    rng = stream(seed, 7)
    for b in p.biases:
        b[...] = rng.normal(0, 0.3, size=b.shape)
    return MlpRatio(p, rng.normal(size=d), rng.uniform(0.5, 2, size=d), lam=lam)


# ----- oracle checks first: hand values and finite differences


def test_loss_of_constant_one_is_one():
    one = lambda x: np.ones(len(x))  # noqa: E731
    assert empirical_dual_loss(one, np.arange(5.0), np.arange(3.0)) == 1.0


def test_loss_identity_stub_hand_value():
    ident = lambda x: np.asarray(x, dtype=float)  # noqa: E731
    got = empirical_dual_loss(ident, [1.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert got == pytest.approx(2.0 - math.log(2.0) / 3.0, abs=1e-12)
    assert got == pytest.approx(1.7690, abs=1e-4)


def test_constant_minimiser_is_one():
    cs = np.linspace(0.2, 5.0, 4801)
    x = np.zeros(4)
    losses = [empirical_dual_loss(lambda v, c=c: np.full(len(v), c), x, x) for c in cs]
    assert cs[int(np.argmin(losses))] == pytest.approx(1.0, abs=1e-3)


def test_loss_empty_batch():
    with pytest.raises(ValueError):
        empirical_dual_loss(lambda v: np.ones(len(v)), [], [1.0])


def test_mlp_loss_gradient_finite_differences():
    rng = stream(21)
    worst = 0.0
    for k in range(100):
        model = mlp_model(k, lam=1e-2 * (k % 2))
        bp, bq = rng.normal(size=(6, 2)), rng.normal(1, 2, size=(5, 2))

        def loss(theta):
            m = MlpRatio(model.params.with_flat(theta), model.shift, model.scale, lam=model.lam)
            # unclipped network output: the clamp never binds inside (nu, mu)
            g = lambda v: nn.mlp_forward(m.params, m.encode(v))  # noqa: E731
            return empirical_dual_loss(g, bp, bq, model.lam, m.reg_sq())

        theta = model.params.flat()
        num = np.empty_like(theta)
        for i in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += 1e-6
            tm[i] -= 1e-6
            num[i] = (loss(tp) - loss(tm)) / 2e-6
        ana = loss_gradient(model, bp, bq, model.lam).flat()
        worst = max(worst, np.linalg.norm(ana - num) / np.linalg.norm(num))
    assert worst < 1e-5


def test_tabular_loss_gradient_finite_differences():
    rng = stream(5)
    keys = [(0.0,), (1.0,), (2.0,)]
    for _ in range(20):
        vals = rng.uniform(0.3, 3.0, 3)
        bp = rng.integers(0, 3, 7).astype(float)[:, None]
        bq = rng.integers(0, 3, 9).astype(float)[:, None]
        model = TabularRatio(keys, vals, 0.1, 10.0, lam=0.3)
        ana = loss_gradient(model, bp, bq, 0.3)
        for i in range(3):
            up, dn = vals.copy(), vals.copy()
            up[i] += 1e-6
            dn[i] -= 1e-6
            f = lambda v: empirical_dual_loss(TabularRatio(keys, v, 0.1, 10.0), bp, bq, 0.3)  # noqa: E731
            assert ana[i] == pytest.approx((f(up) - f(dn)) / 2e-6, rel=1e-6)


def test_tabular_data_gradient_zero_at_one_when_batches_match():
    model = TabularRatio([(0.0,), (1.0,)], np.ones(2), 0.1, 10.0)
    x = np.array([[0.0], [1.0], [1.0]])
    assert np.allclose(loss_gradient(model, x, x), 0.0)


def test_penalty_gradient_alone():
    model = mlp_model(3, lam=0.5)
    x = np.zeros((1, 2))
    with_data = loss_gradient(model, x, x, 0.5).flat()
    data_only = loss_gradient(model, x, x, 0.0).flat()
    np.testing.assert_allclose(with_data - data_only, 0.5 * model.params.flat(), atol=1e-14)


# ----- tabular training


@pytest.mark.parametrize("seed", range(5))
def test_tabular_full_batch_closed_form(seed):
    rng = stream(seed)
    xp = rng.integers(0, 6, 300).astype(float)
    xq = rng.integers(0, 8, 400).astype(float)
    cfg = TrainConfig("tabular", batch_size=0, iterations=200, lr=1.0, lam=0.0, nu=0.1, mu=10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        model = train_ratio(xp, xq, cfg)
    for k, v in zip(model.keys, model.values):
        ph, qh = np.mean(xp == k[0]), np.mean(xq == k[0])
        want = min(max(ph / qh, 0.1), 10.0) if qh else 10.0
        assert v == pytest.approx(want, abs=1e-6)


def test_tabular_same_distribution_is_near_one():
    xp = stream(1).integers(0, 20, 10_000).astype(float)
    xq = stream(2).integers(0, 20, 10_000).astype(float)
    model = train_ratio(xp, xq, TrainConfig("tabular", batch_size=0, iterations=100, lr=1.0))
    assert np.mean(np.abs(model.values - 1.0)) < 0.1


def test_tabular_minibatch_loss_curve_decreases():
    xp = stream(1).integers(0, 5, 2000).astype(float)
    xq = stream(2).integers(0, 10, 2000).astype(float)
    cfg = TrainConfig("tabular", batch_size=256, iterations=500, lr=0.1, eval_every=50)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        model = train_ratio(xp, xq, cfg)
    assert model.info.curve[-1][1] <= model.info.curve[0][1]
    assert np.all((model.values >= 0.1) & (model.values <= 10.0))


def test_unseen_rows_evaluate_to_one():
    model = TabularRatio([(0.0,)], np.array([3.0]), 0.1, 10.0)
    np.testing.assert_array_equal(model(np.array([[0.0], [9.0]])), [3.0, 1.0])


def test_saturation_warning():
    xp = np.zeros(100)
    xq = np.r_[np.zeros(1), np.ones(99)]
    with pytest.warns(SaturationWarning):
        train_ratio(xp, xq, TrainConfig("tabular", batch_size=0, iterations=50, lr=1.0))


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        train_ratio(np.zeros((3, 2)), np.zeros((3, 1)), TrainConfig("tabular"))


# ----- MLP training


def gaussian_mae(n, seed=0, p_mean=4.0):
    spec = GaussianPairSpec(p_mean, 1.0, 4.0, 2.0, n)
    xp, xq = gaussian_pair_sample(spec, stream(seed))
    cfg = TrainConfig(iterations=3000, lr=0.05, hidden=(32, 32, 32), seed=seed, eval_every=500)
    model = train_ratio(xp, xq, cfg)
    grid = np.linspace(2.0, 6.0, 81)[:, None]
    return float(np.mean(np.abs(model(grid) - true_gaussian_ratio(spec, grid).ravel()))), model


def test_gaussian_mlp_more_data_helps():
    small, _ = gaussian_mae(500)
    large, model = gaussian_mae(2000)
    assert large < small
    assert model.info.curve[-1][1] <= model.info.curve[0][1]


def test_mlp_outputs_stay_in_bounds():
    _, model = gaussian_mae(500, seed=3)
    out = model(np.linspace(-50, 50, 201)[:, None])
    assert np.all((out >= model.nu) & (out <= model.mu))


def test_mlp_training_is_deterministic():
    spec = GaussianPairSpec(n=300)
    xp, xq = gaussian_pair_sample(spec, stream(4))
    cfg = TrainConfig(iterations=50, lr=0.01, hidden=(8, 8, 8), seed=9)
    a = train_ratio(xp, xq, cfg)
    b = train_ratio(xp, xq, cfg)
    assert np.array_equal(a.params.flat(), b.params.flat())


def test_model_files_roundtrip(tmp_path):
    model = mlp_model(2)
    model.save(tmp_path / "m.txt")
    back = load_ratio_model(tmp_path / "m.txt")
    x = stream(0).normal(size=(10, 2))
    np.testing.assert_allclose(back(x), model(x), rtol=1e-12)

    tab = TabularRatio([(0.0, 1.0), (2.5, -1.0)], np.array([0.5, 3.25]), 0.1, 10.0, "sa")
    tab.save(tmp_path / "t.txt")
    back = load_ratio_model(tmp_path / "t.txt")
    assert back.keys == tab.keys and np.array_equal(back.values, tab.values) and back.domain == "sa"


# ----- zeta pair


def test_zeta_pair_identical_datasets(grid_pair_5):
    env_tr, _ = grid_pair_5
    pol = delta_mixture(env_tr.expert_policy(), 0.5)
    ds = collect_dataset(env_tr, pol, 5000, seed=3, source="train", horizon=50)
    cfg = TrainConfig("tabular", batch_size=0, iterations=50, lr=1.0)
    m_sas, m_sa, fm = train_zeta_pair(ds, ds, cfg)
    assert np.mean(np.abs(m_sas(fm.sas(ds.s, ds.a, ds.s_next)) - 1)) < 0.1
    assert np.mean(np.abs(m_sa(fm.sa(ds.s, ds.a)) - 1)) < 0.1
    again = train_zeta_pair(ds, ds, cfg)
    assert np.array_equal(again[0].values, m_sas.values)


def test_feature_map_encoding():
    fm = FeatureMap(3, one_hot=True, delta_next=True)
    s = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(fm.sa(s, [2]), [[1, 2, 0, 0, 1]])
    np.testing.assert_array_equal(fm.sas(s, [0], [[1.0, 3.0]]), [[1, 2, 1, 0, 0, 0, 1]])
    assert FeatureMap.parse(fm.token()) == fm
