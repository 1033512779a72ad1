import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simile.autoregressor import LinearAutoregressor
from simile.experiments import constant_policy
from simile.forest import ForestConfig, train_forest
from simile.policy import (
    AffinePolicy,
    EnsemblePolicy,
    interpolate,
    load_policy,
    rollout_det,
    rollout_sto,
    save_policy,
)
from simile.trajectory import StateLayout, SynthConfig, state_matrix, synth_expert

LAYOUT = StateLayout(p=1, q=1, m=1, k=1)


def _forest(seed, lam=1.0):
    tr = synth_expert(SynthConfig(T=80, seed=seed))
    S = state_matrix(tr.contexts, tr.actions, 1, 1)
    return train_forest(S, tr.actions, LinearAutoregressor.identity(1), lam, ForestConfig(seed=seed), LAYOUT)


@pytest.fixture(scope="module")
def forests():
    return [_forest(s) for s in range(4)]


def test_interpolate_weights(forests):
    p0 = EnsemblePolicy.single(forests[0])
    p1 = interpolate(p0, forests[1], 0.5)
    assert p1.weights == (0.5, 0.5)
    p2 = interpolate(p1, forests[2], 0.2)
    assert p2.weights == pytest.approx((0.4, 0.4, 0.2))
    assert sum(p2.weights) == pytest.approx(1.0)


def test_interpolate_full_step_prunes_old_members(forests):
    p = interpolate(EnsemblePolicy.single(forests[0]), forests[1], 1.0)
    assert len(p) == 1 and p.members[0] is forests[1]


def test_interpolate_rejects_bad_beta(forests):
    with pytest.raises(ValueError):
        interpolate(EnsemblePolicy.single(forests[0]), forests[1], 1.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12))
def test_weights_stay_on_simplex(betas):
    f = _CACHED[0]
    p = EnsemblePolicy.single(f)
    for b in betas:
        p = interpolate(p, f, b)
        assert min(p.weights) >= 0
        assert abs(sum(p.weights) - 1.0) <= 1e-12


_CACHED = [_forest(0)]


def test_ensemble_is_weighted_mean(forests):
    p = EnsemblePolicy(tuple(forests[:3]), (0.2, 0.3, 0.5))
    S = np.random.default_rng(0).random((25, LAYOUT.dim))
    want = 0.2 * forests[0].predict(S) + 0.3 * forests[1].predict(S) + 0.5 * forests[2].predict(S)
    np.testing.assert_allclose(p.predict(S), want, atol=1e-15)


def test_rejects_off_simplex(forests):
    with pytest.raises(ValueError):
        EnsemblePolicy(tuple(forests[:2]), (0.5, 0.6))


def test_save_load_round_trip(tmp_path, forests):
    p = EnsemblePolicy(tuple(forests[:2]), (0.25, 0.75))
    path = tmp_path / "p.json"
    save_policy(p, path)
    q = load_policy(path)
    assert q.weights == p.weights
    S = np.random.default_rng(1).random((30, LAYOUT.dim))
    np.testing.assert_array_equal(p.predict(S), q.predict(S))
    assert json.loads(path.read_text())["format"] == "simile-policy"


def test_rollout_feeds_back_own_actions(forests):
    tr = synth_expert(SynthConfig(T=40, seed=9))
    res = rollout_det(forests[0], tr.contexts, tr.actions[0], keep_states=True)
    assert res.actions.shape == (40, 1)
    np.testing.assert_array_equal(res.states[1:, -1], res.actions[:-1, 0])
    assert res.states[0, -1] == tr.actions[0, 0]
    np.testing.assert_array_equal(res.states, state_matrix(tr.contexts, res.actions, 1, 1, tr.actions[0]))


def test_rollout_actions_bounded(forests):
    tr = synth_expert(SynthConfig(T=60, seed=2))
    a = rollout_det(EnsemblePolicy(tuple(forests), (0.25,) * 4), tr.contexts, tr.actions[0]).actions
    assert a.min() >= 0 and a.max() <= 1


def test_stochastic_rollout_single_member_equals_deterministic(forests):
    tr = synth_expert(SynthConfig(T=50, seed=1))
    p = EnsemblePolicy.single(forests[0])
    np.testing.assert_array_equal(rollout_sto(p, tr.contexts, tr.actions[0], seed=3).actions,
                                  rollout_det(p, tr.contexts, tr.actions[0]).actions)


def test_stochastic_rollout_seeded(forests):
    tr = synth_expert(SynthConfig(T=50, seed=1))
    p = EnsemblePolicy(tuple(forests[:2]), (0.5, 0.5))
    a = rollout_sto(p, tr.contexts, tr.actions[0], seed=4).actions
    b = rollout_sto(p, tr.contexts, tr.actions[0], seed=4).actions
    c = rollout_sto(p, tr.contexts, tr.actions[0], seed=5).actions
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_affine_policy_formula():
    layout = StateLayout(p=1, q=2, m=1, k=1)
    h = LinearAutoregressor(np.array([[0.6, 0.3]]))
    pol = AffinePolicy(np.array([[0.5, 0.25]]), np.array([0.1]), 2.0, h, layout)
    s = np.array([[0.4, 0.2, 0.8, 0.6]])
    want = (0.5 * 0.4 + 0.25 * 0.2 + 0.1 + 2.0 * (0.6 * 0.8 + 0.3 * 0.6)) / 3.0
    assert pol.predict(s)[0, 0] == pytest.approx(want)


def test_constant_policy():
    p = constant_policy(LAYOUT, 0.3)
    S = np.random.default_rng(0).random((10, LAYOUT.dim))
    np.testing.assert_array_equal(p.predict(S), np.full((10, 1), 0.3))


def test_layout_mismatch_rejected(forests):
    other = constant_policy(StateLayout(p=2, q=1, m=1, k=1), 0.5).members[0]
    with pytest.raises(ValueError):
        EnsemblePolicy((forests[0], other), (0.5, 0.5))
