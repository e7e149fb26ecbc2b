import inspect
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from headerbid.dist import LognormalParams, optimal_bid
from headerbid.particles import FilterConfig, ParticleSet, make_rng
from headerbid.policies import (BanditState, Exp3Policy, FixedShadingPolicy, PolicyDecision,
                                ThompsonPolicy, UCBPolicy, exp3_decide, exp3_feedback,
                                exp3_theory_gamma, fixed_decide, ts_decide, ts_feedback, ucb_decide,
                                ucb_feedback, ucb_indices)


def point_filter(mu=0.0, sigma=1e-6, seed=0):
    cfg = FilterConfig(num_particles=1)
    return ParticleSet(np.array([mu]), np.array([sigma]), np.array([1.0]), make_rng(seed), cfg)


def test_ts_degenerate_posterior():
    d = ts_decide(point_filter(), 10.0)
    assert d.bid == pytest.approx(1.0, abs=1e-4)
    assert d.sampled_theta == LognormalParams(1e-6, 0.0)
    assert ts_decide(point_filter(), 0.0).bid == 0.0


def test_ts_deterministic_given_cloned_rng():
    f = ParticleSet.initial(FilterConfig(), seed=4)
    g = f.copy()
    assert ts_decide(f, 3.0) == ts_decide(g, 3.0)


def test_ts_feedback_delegates_to_update():
    f = ParticleSet.initial(FilterConfig(num_particles=10), seed=1)
    g = f.copy()
    ts_feedback(f, 1.5, True)
    g.update(1.5, True)
    assert np.array_equal(f.weights, g.weights) and np.array_equal(f.mu, g.mu)


def test_ts_feedback_rescue_on_impossible_win():
    f = ParticleSet.initial(FilterConfig(num_particles=10, epsilon=0.0), seed=1)
    ts_feedback(f, 0.0, True)
    assert f.rescues == 1
    assert f.weights.tolist() == [0.1] * 10


def test_feedback_interface_has_no_competing_bid():
    for cls in (ThompsonPolicy, UCBPolicy, Exp3Policy, FixedShadingPolicy):
        params = list(inspect.signature(cls.feedback).parameters)
        assert params == ["self", "context", "decision", "won", "revenue"]
    assert list(inspect.signature(ts_feedback).parameters) == ["filt", "bid", "won"]


def test_ucb_first_pull():
    s = BanditState(num_arms=100)
    d = ucb_decide(s, 8.0)
    assert d.arm == 1 and d.bid == 8.0 / 100


def test_ucb_plays_every_arm_once_in_order():
    s = BanditState(num_arms=5)
    arms = []
    for _ in range(5):
        d = ucb_decide(s, 1.0)
        arms.append(d.arm)
        ucb_feedback(s, d.arm, 0.0)
    assert arms == [1, 2, 3, 4, 5]


def test_ucb_index_arithmetic():
    s = BanditState(num_arms=3, t=100)
    s.counts[:] = [10, 45, 45]
    s.sums[:] = [5.0, 9.0, 9.0]
    expected = 0.5 + math.sqrt(2.0 * math.log(100.0) / 10.0)
    assert expected == pytest.approx(1.459705, abs=1e-6)
    assert ucb_indices(s)[0] == pytest.approx(expected, abs=1e-12)


def test_ucb_exploits_dominant_arm():
    s = BanditState(num_arms=10)
    for j in range(1, 11):
        ucb_feedback(s, j, 1.0 if j == 7 else 0.0)
    assert ucb_decide(s, 1.0).arm == 7


def test_ucb_ties_go_to_lowest_arm():
    s = BanditState(num_arms=4)
    for j in range(1, 5):
        ucb_feedback(s, j, 0.5)
    assert ucb_decide(s, 1.0).arm == 1


@given(st.lists(st.floats(0, 1), min_size=3, max_size=40), st.floats(0.01, 1e4))
def test_ucb_argmax_invariant_to_reward_scale(rewards, scale):
    a, b = BanditState(num_arms=3, reward_bound=1.0), BanditState(num_arms=3, reward_bound=scale)
    for r in rewards:
        da, db = ucb_decide(a, 1.0), ucb_decide(b, 1.0)
        assert da.arm == db.arm
        ucb_feedback(a, da.arm, r)
        ucb_feedback(b, db.arm, r * scale)


def test_exp3_uniform_start():
    for gamma in (0.01, 0.3, 1.0):
        s = BanditState(num_arms=7, gamma=gamma)
        assert s.exp3_probabilities() == pytest.approx([1 / 7] * 7, abs=1e-15)


def test_exp3_pure_exploration():
    s = BanditState(num_arms=4, gamma=1.0)
    s.log_weights[:] = [3.0, -1.0, 0.0, 8.0]
    assert s.exp3_probabilities() == pytest.approx([0.25] * 4, abs=1e-15)


def test_exp3_update_arithmetic():
    s = BanditState(num_arms=2, gamma=0.1, reward_bound=1.0)
    assert s.exp3_probabilities()[0] == pytest.approx(0.5)
    exp3_feedback(s, 1, 1.0)
    e = math.exp(0.1 * (1.0 / 0.5) / 2)
    assert e == pytest.approx(math.exp(0.1))
    expected = 0.9 * e / (e + 1.0) + 0.05
    assert expected == pytest.approx(0.522481, abs=1e-6)
    assert s.exp3_probabilities()[0] == pytest.approx(expected, abs=1e-12)


def test_exp3_sampling_frequency():
    s = BanditState(num_arms=2, gamma=0.1, rng=make_rng(3))
    s.log_weights[:] = [math.log(3.0), 0.0]
    p0 = s.exp3_probabilities()[0]
    draws = [exp3_decide(s, 1.0).arm for _ in range(40_000)]
    assert abs(draws.count(1) / 40_000 - p0) < 0.01


def test_exp3_reward_clamped(caplog):
    s = BanditState(num_arms=2, gamma=0.5, reward_bound=1.0)
    exp3_feedback(s, 2, 5.0)
    assert s.sums[1] == 1.0
    assert "clamped" in caplog.text


def test_exp3_theory_gamma():
    assert exp3_theory_gamma(100, 10) == 1.0
    g = exp3_theory_gamma(100, 10**7)
    assert g == pytest.approx(math.sqrt(100 * math.log(100) / ((math.e - 1) * 10**7)))


@pytest.mark.parametrize("alpha,p,bid", [(0.0, 8.0, 0.0), (1.0, 8.0, 8.0), (0.5, 8.0, 4.0)])
def test_fixed_examples(alpha, p, bid):
    assert fixed_decide(alpha, p).bid == bid
    with pytest.raises(ValueError):
        fixed_decide(1.5, p)


@given(st.floats(0, 1e4), st.integers(0, 2**31))
def test_all_policies_bid_within_price(p, seed):
    policies = [ThompsonPolicy(FilterConfig(num_particles=20), seed), UCBPolicy(10, 100.0, seed=seed),
                Exp3Policy(10, 100.0, seed=seed), FixedShadingPolicy(0.3)]
    for pol in policies:
        for ctx in (0, 1):
            d = pol.decide(ctx, p)
            assert 0.0 <= d.bid <= p
            if d.arm is not None:
                assert d.bid == (d.arm / 10) * p
            pol.feedback(ctx, d, bool(seed % 2), 0.0)


def test_bandits_are_per_context():
    pol = UCBPolicy(num_arms=3)
    d = pol.decide(0, 1.0)
    pol.feedback(0, d, True, 1.0)
    assert pol.states[0].t == 1
    assert pol.decide(1, 1.0).arm == 1
    assert 1 not in pol.states or pol.states[1].t == 0
    glob = UCBPolicy(num_arms=3, contextual=False)
    glob.feedback(5, glob.decide(5, 1.0), True, 1.0)
    assert list(glob.states) == [0]


def test_thompson_contexts_use_independent_streams():
    a, b = ThompsonPolicy(FilterConfig(num_particles=8), seed=2), ThompsonPolicy(FilterConfig(num_particles=8), seed=2)
    a.filter(3)
    b.filter(0)
    b.filter(3)
    assert np.array_equal(a.filter(3).mu, b.filter(3).mu)
