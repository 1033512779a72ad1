import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simile.experiments import constant_policy
from simile.forest import ForestConfig
from simile.theory import BETA_MAX, BETA_MIN
from simile.training import (
    SigmaSchedule,
    TrainingConfig,
    adaptive_beta,
    gen_feedback,
    sigma_schedule_value,
    simile_train,
)
from simile.trajectory import StateLayout, SynthConfig, synth_expert

FAST = TrainingConfig(n_iterations=3, forest=ForestConfig(n_trees=3, max_depth=4))


def test_feedback_examples():
    np.testing.assert_array_equal(gen_feedback([0.2], [0.6], 0.0), [0.6])
    np.testing.assert_array_equal(gen_feedback([0.2], [0.6], 1.0), [0.2])
    np.testing.assert_allclose(gen_feedback([0.2], [0.6], 0.5), [0.4])
    with pytest.raises(ValueError):
        gen_feedback([0.2, 0.3], [0.6], 0.5)
    with pytest.raises(ValueError):
        gen_feedback([0.2], [0.6], 1.5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=40), st.floats(0, 1))
def test_feedback_never_points_away_from_expert(pairs, sigma):
    a, e = np.array(pairs).T
    hat = gen_feedback(a, e, sigma)
    assert np.all((a - e) * (hat - a) <= 0)
    assert np.all(hat >= np.minimum(a, e)) and np.all(hat <= np.maximum(a, e))


def test_adaptive_beta_examples():
    assert adaptive_beta(1.0, 1.0) == 0.5
    assert adaptive_beta(1.0, 3.0) == 0.75
    assert adaptive_beta(0.0, 2.0) == BETA_MAX
    assert adaptive_beta(2.0, 0.0) == BETA_MIN
    assert adaptive_beta(0.0, 0.0) == BETA_MIN
    with pytest.raises(ValueError):
        adaptive_beta(-1.0, 1.0)


def test_sigma_schedules():
    g = SigmaSchedule("geometric", 0.5, 0.5)
    assert [sigma_schedule_value(g, n) for n in (1, 2, 3)] == [0.5, 0.25, 0.125]
    assert sigma_schedule_value(SigmaSchedule("constant", 0.3), 7) == 0.3
    assert sigma_schedule_value(SigmaSchedule("zero"), 1) == 0.0
    with pytest.raises(ValueError):
        sigma_schedule_value(g, 0)
    with pytest.raises(ValueError):
        SigmaSchedule("cosine")


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(tau=3, q=2)
    with pytest.raises(ValueError):
        TrainingConfig(beta=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(lam=-1)
    assert TrainingConfig(beta="0.25").beta == 0.25


@pytest.fixture(scope="module")
def run():
    tr = synth_expert(SynthConfig(T=80, seed=2))
    return tr, simile_train(tr, FAST)


def test_records_and_weights(run):
    _, (policy, records) = run
    assert [r.iteration for r in records] == [0, 1, 2, 3]
    assert records[0].beta is None and records[0].theory is None
    assert all(BETA_MIN <= r.beta <= BETA_MAX for r in records[1:])
    assert abs(sum(policy.weights) - 1) <= 1e-12
    assert 2 <= len(policy) <= 4


def test_adaptive_beta_matches_recorded_errors(run):
    _, (_, records) = run
    for r in records[1:]:
        assert r.beta == adaptive_beta(r.error_new, r.error_old)
    for prev, r in zip(records, records[1:]):
        assert r.error_old == prev.combined_error


def test_feedback_alignment_non_positive(run):
    _, (_, records) = run
    assert all(r.feedback_alignment <= 0 for r in records[1:])


def test_training_is_deterministic(run):
    tr, (policy, records) = run
    again, rec2 = simile_train(tr, FAST)
    assert json.dumps(policy.to_dict()) == json.dumps(again.to_dict())
    assert [r.combined_error for r in records] == [r.combined_error for r in rec2]


def test_fixed_beta_full_step_keeps_one_member(run):
    tr, _ = run
    policy, records = simile_train(tr, replace(FAST, beta=1.0), with_theory=False)
    assert len(policy) == 1
    assert records[-1].combined_error == records[-1].error_new


def test_zero_iterations_returns_initial_policy(run):
    tr, _ = run
    policy, records = simile_train(tr, replace(FAST, n_iterations=0))
    assert len(records) == 1 and len(policy) == 1


def test_custom_initial_policy(run):
    tr, _ = run
    init = constant_policy(StateLayout(FAST.p, FAST.q, 1, 1), 0.5)
    seen = []
    simile_train(tr, replace(FAST, n_iterations=1), init=init, with_theory=False,
                 on_iteration=lambda r, p, ex: seen.append(p))
    assert seen[0] is init
    assert records_error(tr, init) == pytest.approx(np.mean((tr.actions - 0.5) ** 2))


def records_error(tr, policy):
    _, records = simile_train(tr, replace(FAST, n_iterations=0), init=policy)
    return records[0].combined_error


def test_multiple_trajectories():
    trajs = [synth_expert(SynthConfig(T=50, seed=s)) for s in (1, 2)]
    policy, records = simile_train(trajs, replace(FAST, n_iterations=1), with_theory=False)
    assert len(records) == 2 and len(policy) == 2
    with pytest.raises(ValueError):
        simile_train([], FAST)


def test_theory_estimates_recorded(run):
    _, (_, records) = run
    th = records[1].theory
    assert th is not None and th.gamma >= 0 and th.epsilon >= 0
