import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oee.core import (ActionSpec, DimensionError, DiscountSpec, EvaluationReport, Policy, TransitionDataset,
                      collect_dataset, delta_mixture, discounted_return, monte_carlo_return, rollout,
                      sample_action, uniform_policy)
from oee.envs.archery import Archery, ArcherySpec
from oee.envs.gridworld import Gridworld, GridworldSpec
from oee.rng import stream

FOUR = ActionSpec(n=4)


def expert_const(action, n=5):
    return Policy("expert-table", FOUR, table=np.full((n, n), action), state_dim=2)


class ConstantRewardChain:
    """Deterministic 1-d chain paying 1 per step, never terminating."""

    state_dim = 1
    action_spec = ActionSpec(n=1)
    reward_on_arrival = False

    def reset(self, rng):
        return np.zeros(1)

    def step(self, s, a, rng):
        return s + 1.0, 1.0, False


def test_uniform_policy_chi_square():
    pol = uniform_policy(FOUR)
    rng = stream(7)
    draws = [sample_action(pol, np.zeros(2), rng) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=4)
    assert stats.chisquare(counts).pvalue > 0.001


def test_mixture_delta_zero_is_uniform():
    mix = delta_mixture(expert_const(2), 0.0)
    np.testing.assert_array_equal(mix.probs(np.zeros(2)), np.full(4, 0.25))


def test_mixture_half_probability():
    mix = delta_mixture(expert_const(2), 0.5)
    assert mix.prob(np.zeros(2), 2) == pytest.approx(0.5 + 0.5 / 4)
    # cartpole convention flips the roles of delta
    flip = delta_mixture(expert_const(2), 0.5, expert_weight_is_delta=False)
    assert flip.prob(np.zeros(2), 2) == pytest.approx(0.625)
    assert delta_mixture(expert_const(2), 0.9, False).weight_uniform == pytest.approx(0.9)


@given(st.floats(0, 1), st.integers(0, 3), st.integers(0, 4), st.integers(0, 4))
def test_mixture_probs_sum_to_one(delta, act, x, y):
    mix = delta_mixture(expert_const(act), delta)
    assert abs(mix.probs(np.array([x, y], float)).sum() - 1.0) < 1e-9


def test_policy_dimension_error():
    with pytest.raises(DimensionError):
        sample_action(expert_const(0), np.zeros(3), stream(0))


def test_rollout_deterministic_path():
    env = Gridworld(GridworldSpec(5, 0.0))
    # N on even diagonal cells (x == y), E otherwise: N, E, N, E, ...
    table = np.where(np.eye(5, dtype=bool), 0, 2)
    pol = Policy("expert-table", FOUR, table=table, state_dim=2)
    traj = rollout(env, pol, DiscountSpec(0.99, 200), stream(3))
    cells = [tuple(tr.s_next.astype(int)) for tr in traj]
    assert cells == [(0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 4), (4, 4)]
    assert [tr.r for tr in traj] == [-1.0] * 8
    traj.check()


def test_archery_rollout_single_step():
    traj = rollout(Archery(ArcherySpec()), uniform_policy(Archery(ArcherySpec()).action_spec),
                   DiscountSpec(1.0, 10), stream(1))
    assert len(traj) == 1


def test_rollout_same_seed_identical(grid_pair_5):
    env = grid_pair_5[0]
    pol = delta_mixture(env.expert_policy(), 0.5)
    spec = DiscountSpec(0.99, 200)
    a = rollout(env, pol, spec, stream(11, 4))
    b = rollout(env, pol, spec, stream(11, 4))
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert np.array_equal(x.s, y.s) and x.a == y.a and np.array_equal(x.s_next, y.s_next)


def test_trajectory_chaining(grid_pair_10):
    env = grid_pair_10[0]
    pol = delta_mixture(env.expert_policy(), 0.3)
    for i in range(20):
        traj = rollout(env, pol, DiscountSpec(0.99, 200), stream(5, i))
        for prev, cur in zip(traj.transitions, traj.transitions[1:]):
            assert np.array_equal(prev.s_next, cur.s)


def test_constant_reward_geometric_sum():
    rep = monte_carlo_return(ConstantRewardChain(), Policy("uniform", ActionSpec(n=1)),
                             DiscountSpec(0.5, 3, 4), seed=0)
    assert rep.mean == 1.75
    assert rep.stderr == 0.0


def test_single_rollout_has_no_stderr():
    rep = monte_carlo_return(ConstantRewardChain(), Policy("uniform", ActionSpec(n=1)),
                             DiscountSpec(0.5, 3, 1), seed=0)
    assert rep.stderr is None
    assert rep.csv_row().split(",")[3] == "NA"


def test_discounted_return_weights():
    assert discounted_return([1, 1, 1], 0.5, [1, 2, 4]) == 1 + 1 + 1


def test_report_mean_matches_values():
    rep = EvaluationReport("X", np.array([1.0, 2.0, 6.0]), 0.9, 10)
    assert rep.mean == 3.0
    assert rep.stderr == pytest.approx(np.std([1, 2, 6], ddof=1) / np.sqrt(3))


def test_dataset_roundtrip(tmp_path, grid_pair_5):
    env = grid_pair_5[1]
    ds = collect_dataset(env, delta_mixture(env.expert_policy(), 0.5), 500, seed=9, source="test", horizon=200)
    assert len(ds) == 500
    ds.save(tmp_path / "d.txt")
    back = TransitionDataset.load(tmp_path / "d.txt")
    assert back.source == "test" and back.seed == 9
    np.testing.assert_array_equal(back.s, ds.s)
    np.testing.assert_array_equal(back.a, ds.a)
    np.testing.assert_array_equal(back.t, ds.t)
    first = (tmp_path / "d.txt").read_text().splitlines()[0]
    assert first.startswith("oee-dataset v1 ds=2 da=d4 source=test")


def test_dataset_roundtrip_continuous(tmp_path):
    env = Archery(ArcherySpec())
    ds = collect_dataset(env, uniform_policy(env.action_spec), 200, seed=1, source="train", horizon=1)
    ds.save(tmp_path / "a.txt")
    back = TransitionDataset.load(tmp_path / "a.txt")
    rel = np.abs(back.s_next - ds.s_next) / np.maximum(np.abs(ds.s_next), 1e-300)
    assert rel.max() < 1e-12
    np.testing.assert_allclose(back.a, ds.a, rtol=1e-12)
    assert back.action_spec == ds.action_spec


def test_dataset_trajectories_split(grid_pair_5):
    env = grid_pair_5[1]
    ds = collect_dataset(env, delta_mixture(env.expert_policy(), 0.9), 300, seed=2, source="test", horizon=200)
    trajs = ds.trajectories()
    assert sum(len(t) for t in trajs) == 300
    for t in trajs:
        t.check()


def test_dataset_seed_determinism(grid_pair_5):
    env = grid_pair_5[0]
    pol = delta_mixture(env.expert_policy(), 0.5)
    a = collect_dataset(env, pol, 400, seed=3, source="train", horizon=200)
    b = collect_dataset(env, pol, 400, seed=3, source="train", horizon=200)
    np.testing.assert_array_equal(a.s_next, b.s_next)
