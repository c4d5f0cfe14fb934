import math

import numpy as np
import pytest
from scipy import stats

from oee.core import DiscountSpec
from oee.envs.archery import Archery, ArcherySpec
from oee.envs.cartpole import Cartpole, CartpoleSpec, cartpole_accel
from oee.envs.gaussian import GaussianPairSpec, gaussian_pair_sample, true_gaussian_ratio
from oee.envs.gridworld import (DomainError, Gridworld, GridworldSpec, SupportError, gridworld_transition_prob,
                                true_zeta_gridworld)
from oee.rng import stream

DIRS = {0: (0, 1), 1: (0, -1), 2: (1, 0), 3: (-1, 0)}


def enumerate_slip(n, eps, cell, a):
    """Brute-force next-cell distribution, written independently of the env."""
    out = {}
    for k, (dx, dy) in DIRS.items():
        p = 1 - eps if k == a else eps / 3
        x, y = cell[0] + dx, cell[1] + dy
        dest = (x, y) if 0 <= x < n and 0 <= y < n else cell
        out[dest] = out.get(dest, 0.0) + p
    return out


# ----------------------------------------------------------------- gridworld

def test_no_slip_moves_north():
    env = Gridworld(GridworldSpec(5, 0.0))
    for i in range(50):
        s_next, r, done = env.step(np.array([2.0, 2.0]), 0, stream(1, i))
        assert tuple(s_next) == (2.0, 3.0) and r == -1.0 and not done


def test_slip_probabilities_interior():
    spec = GridworldSpec(5, 0.3)
    s = np.array([2.0, 2.0])
    assert gridworld_transition_prob(spec, s, 0, [2, 3]) == pytest.approx(0.7)
    assert gridworld_transition_prob(spec, s, 0, [3, 2]) == pytest.approx(0.1)
    assert gridworld_transition_prob(spec, s, 0, [2, 1]) == pytest.approx(0.1)


def test_slip_empirical_frequencies():
    env = Gridworld(GridworldSpec(5, 0.3))
    rng = stream(2)
    s = np.array([2.0, 2.0])
    n = 100_000
    hits = {}
    for _ in range(n):
        c = tuple(env.step(s, 0, rng)[0].astype(int))
        hits[c] = hits.get(c, 0) + 1
    for cell, p in enumerate_slip(5, 0.3, (2, 2), 0).items():
        band = 3 * math.sqrt(p * (1 - p) / n)
        assert abs(hits[cell] / n - p) < band


@pytest.mark.parametrize("cell,a", [((0, 2), 3), ((0, 0), 0), ((0, 0), 1), ((3, 4), 0), ((4, 0), 2), ((2, 0), 1)])
def test_wall_rows_match_enumeration(cell, a):
    env = Gridworld(GridworldSpec(5, 0.3))
    brute = enumerate_slip(5, 0.3, cell, a)
    for dest, p in brute.items():
        assert env.transition_prob(np.array(cell, float), a, np.array(dest, float)) == pytest.approx(p, abs=1e-15)
    assert sum(brute.values()) == pytest.approx(1.0)
    assert len(brute) <= 4


def test_corner_has_at_most_three_outcomes():
    row = enumerate_slip(5, 0.3, (0, 0), 0)
    assert len(row) == 3
    env = Gridworld(GridworldSpec(5, 0.3))
    assert env.row(0, 0) == pytest.approx({env.index((0, 1)): 0.7, env.index((1, 0)): 0.1, 0: 0.2})


@pytest.mark.parametrize("n,eps", [(5, 0.3), (10, 0.1), (7, 0.0)])
def test_rows_sum_to_one(n, eps):
    P = Gridworld(GridworldSpec(n, eps)).kernel
    assert np.abs(P.sum(axis=2) - 1.0).max() < 1e-12


def test_empirical_rows_goodness_of_fit():
    env = Gridworld(GridworldSpec(5, 0.3))
    rng = stream(4)
    s = np.array([0.0, 2.0])
    row = env.row(env.index(s), 3)
    keys = sorted(row)
    counts = dict.fromkeys(keys, 0)
    for _ in range(100_000):
        counts[env.index(env.step(s, 3, rng)[0])] += 1
    obs = np.array([counts[k] for k in keys])
    exp = np.array([row[k] for k in keys]) * 100_000
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_outside_grid_is_domain_error():
    env = Gridworld(GridworldSpec(5, 0.1))
    with pytest.raises(DomainError):
        env.step(np.array([5.0, 0.0]), 0, stream(0))


def test_goal_terminates():
    env = Gridworld(GridworldSpec(3, 0.0))
    s_next, r, done = env.step(np.array([2.0, 1.0]), 0, stream(0))
    assert tuple(s_next) == (2.0, 2.0) and done and r == -1.0


def test_expert_prefers_goal_direction():
    env = Gridworld(GridworldSpec(6, 0.3))
    pol = env.expert_policy()
    assert pol.expert_action(np.array([0.0, 5.0])) == 2  # top row: go east
    assert pol.expert_action(np.array([5.0, 0.0])) == 0  # right column: go north


def test_true_zeta_values(grid_pair_10):
    tr, te = grid_pair_10
    s = np.array([4.0, 4.0])
    assert true_zeta_gridworld(tr, te, s, 0, [4, 5]) == pytest.approx(0.9 / 0.7)
    assert true_zeta_gridworld(tr, te, s, 0, [5, 4]) == pytest.approx(1 / 3)
    same = Gridworld(GridworldSpec(10, 0.3))
    for j, _ in tr.row(tr.index(s), 2).items():
        assert true_zeta_gridworld(tr, same, s, 2, tr.cell(j)) == 1.0


def test_true_zeta_zero_denominator(grid_pair_10):
    tr, te = grid_pair_10
    with pytest.raises(SupportError):
        true_zeta_gridworld(tr, te, np.array([4.0, 4.0]), 0, [7, 7])


def test_zeta_reweights_train_into_test(grid_pair_10):
    tr, te = grid_pair_10
    for i in tr.nonterminal_states():
        for a in range(4):
            row = tr.row(i, a)
            total = sum(true_zeta_gridworld(tr, te, tr.cell(i), a, tr.cell(j)) * p for j, p in row.items())
            assert abs(total - 1.0) < 1e-12


# ----------------------------------------------------------------- cartpole

def test_cartpole_mirror_symmetry():
    env = Cartpole(CartpoleSpec(noise_std=0.0))
    s = np.zeros(4)
    sl, sr = s.copy(), s.copy()
    for _ in range(30):
        sl = env.step(sl, 0, stream(0))[0]
        sr = env.step(sr, 1, stream(0))[0]
        np.testing.assert_allclose(sl, -sr, atol=1e-15)


def test_heavier_gravity_accelerates_pole_faster():
    s = np.array([0.0, 0.0, 0.05, 0.0])
    _, acc10 = cartpole_accel(CartpoleSpec(gravity=10.0), s, 1)
    _, acc15 = cartpole_accel(CartpoleSpec(gravity=15.0), s, 1)
    # direct evaluation of the equations: theta_acc is affine in g with slope sin(theta)/denominator
    denom = 0.5 * (4 / 3 - 0.1 * math.cos(0.05) ** 2 / 1.1)
    assert acc15 - acc10 == pytest.approx(5.0 * math.sin(0.05) / denom)
    assert abs(acc15) > abs(acc10) or acc15 > acc10


def test_cartpole_noise_std():
    clean = Cartpole(CartpoleSpec(noise_std=0.0))
    noisy = Cartpole(CartpoleSpec(noise_std=1e-3))
    rng_c, rng_n = stream(5), stream(5)
    s = np.array([0.0, 0.1, 0.02, -0.1])
    diffs = np.array([noisy.step(s, 1, rng_n)[0] - clean.step(s, 1, rng_c)[0] for _ in range(10_000)])
    np.testing.assert_allclose(diffs.std(axis=0), 1e-3, rtol=0.05)


def test_cartpole_reward_one_until_termination():
    env = Cartpole(CartpoleSpec())
    s = env.reset(stream(1))
    rewards, done = [], False
    rng = stream(1, 1)
    while not done:
        s, r, done = env.step(s, 1, rng)
        rewards.append(r)
    assert all(r == 1.0 for r in rewards) and len(rewards) < 200


# ----------------------------------------------------------------- archery

def test_archery_deterministic_limit():
    spec = ArcherySpec(wind_mean=4.0, wind_std=1e-300)
    theta = 0.5 * math.asin(0.5 * 4.0 / 10.0)
    x, r, done = Archery(spec).step(np.zeros(1), [theta], stream(0))
    assert abs(x[0]) < 1e-12 and abs(r) < 1e-12 and done


def test_archery_landing_variance():
    env = Archery(ArcherySpec(4.0, 2.0))
    rng = stream(8)
    xs = np.array([env.step(np.zeros(1), [0.3], rng)[0][0] for _ in range(100_000)])
    assert xs.var() == pytest.approx(0.5**2 * 4.0, rel=0.05)


def test_archery_reward_nonpositive():
    env = Archery(ArcherySpec())
    rng = stream(9)
    for th in np.linspace(0, math.pi / 2, 50):
        assert env.step(np.zeros(1), [th], rng)[1] <= 0.0


def test_archery_theta_range():
    with pytest.raises(DomainError):
        Archery(ArcherySpec()).step(np.zeros(1), [2.0], stream(0))


# ----------------------------------------------------------------- gaussian pairs

def test_gaussian_same_distribution_means():
    spec = GaussianPairSpec(4, 2, 4, 2, 10_000)
    p, q = gaussian_pair_sample(spec, stream(1))
    assert abs(p.mean() - q.mean()) < 4 * 2 / math.sqrt(10_000)


def test_gaussian_q_mean():
    spec = GaussianPairSpec(2, 1, 4, 2, 100_000)
    _, q = gaussian_pair_sample(spec, stream(2))
    assert abs(q.mean() - 4) < 4 * 2 / math.sqrt(100_000)


def test_gaussian_seeded():
    spec = GaussianPairSpec(n=50)
    a = gaussian_pair_sample(spec, stream(3))
    b = gaussian_pair_sample(spec, stream(3))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_true_gaussian_ratio_values():
    spec = GaussianPairSpec(2, 1, 4, 2)
    assert true_gaussian_ratio(spec, 4.0) == pytest.approx(2 * math.exp(-2))
    assert true_gaussian_ratio(spec, 2.0) == pytest.approx(2 * math.exp(0.5))
    assert true_gaussian_ratio(GaussianPairSpec(1, 3, 1, 3), np.linspace(-5, 5, 11)) == pytest.approx(1.0)
    # scipy pdf ratio as a second route
    x = np.linspace(-2, 8, 21)
    np.testing.assert_allclose(true_gaussian_ratio(spec, x),
                               stats.norm.pdf(x, 2, 1) / stats.norm.pdf(x, 4, 2), rtol=1e-12)
