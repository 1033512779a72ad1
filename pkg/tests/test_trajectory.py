import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simile.metrics import smoothness
from simile.trajectory import (
    StateLayout,
    SynthConfig,
    Trajectory,
    TrajectoryError,
    load_trajectory,
    make_state,
    save_trajectory,
    state_matrix,
    synth_expert,
)


def traj(xs, as_, bound=10.0):
    return Trajectory(np.array(xs, dtype=float), np.array(as_, dtype=float), action_bound=bound)


# times are 0-based: t=1 below is the second step


def test_make_state_current_context_previous_action():
    tr = traj([5, 7], [3, 0.5])
    np.testing.assert_array_equal(make_state(tr, 1, p=0, q=1), [7, 3])


def test_make_state_first_step_uses_initial_action():
    tr = traj([5, 6], [0.2, 0.4])
    np.testing.assert_array_equal(make_state(tr, 0, p=0, q=1, a0=3), [5, 3])


def test_make_state_windows_newest_first():
    tr = traj([1, 2, 3], [9, 8, 0.0])
    np.testing.assert_array_equal(make_state(tr, 2, p=1, q=2), [3, 2, 8, 9])


def test_make_state_clamps_history_to_first_context():
    tr = traj([4, 5, 6], [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(make_state(tr, 0, p=2, q=2, a0=0.7), [4, 4, 4, 0.7, 0.7])


def test_make_state_out_of_range():
    tr = traj([1, 2], [0.1, 0.2])
    with pytest.raises(IndexError):
        make_state(tr, 2, 1, 1)
    with pytest.raises(IndexError):
        make_state(tr, -1, 1, 1)


def test_state_matrix_matches_make_state():
    tr = synth_expert(SynthConfig(T=30, m=2, seed=4))
    S = state_matrix(tr.contexts, tr.actions, 2, 3)
    for t in range(tr.T):
        np.testing.assert_array_equal(S[t], make_state(tr, t, 2, 3))
    assert S.shape[1] == StateLayout(2, 3, 2, 1).dim == 3 * 2 + 3


def test_trajectory_invariants():
    with pytest.raises(TrajectoryError):
        traj([1], [0.5])
    with pytest.raises(TrajectoryError):
        traj([1, 2], [0.5])
    with pytest.raises(TrajectoryError):
        traj([1, 2], [0.5, 1.5], bound=1.0)
    with pytest.raises(TrajectoryError):
        traj([1, np.nan], [0.5, 0.5])


def test_load_csv_two_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,0.5\n2,0.6\n")
    tr = load_trajectory(p, n_context=1, n_action=1)
    assert tr.T == 2
    np.testing.assert_array_equal(tr.actions[:, 0], [0.5, 0.6])


def test_load_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(TrajectoryError, match="no rows"):
        load_trajectory(p, n_context=1, n_action=1)


def test_load_reports_out_of_bounds_line(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("x_1,a_1\n1,0.5\n2,-1\n")
    with pytest.raises(TrajectoryError, match="line 3"):
        load_trajectory(p, n_context=1, n_action=1)


def test_load_malformed_row(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1,0.5\n2\n")
    with pytest.raises(TrajectoryError, match="line 2"):
        load_trajectory(p, n_context=1, n_action=1)


@pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
def test_round_trip(tmp_path, suffix):
    tr = synth_expert(SynthConfig(T=25, m=2, seed=1))
    p = tmp_path / f"t{suffix}"
    save_trajectory(tr, p)
    back = load_trajectory(p, n_context=2, n_action=1)
    np.testing.assert_array_equal(back.contexts, tr.contexts)
    np.testing.assert_array_equal(back.actions, tr.actions)


def test_synth_degenerate_smoother_copies_context():
    tr = synth_expert(SynthConfig(T=50, noise_std=0.0, smoothing_halflife=0.0, seed=2))
    np.testing.assert_allclose(tr.actions, tr.contexts, atol=1e-12)


def test_synth_deterministic():
    a = synth_expert(SynthConfig(seed=11))
    b = synth_expert(SynthConfig(seed=11))
    assert np.array_equal(a.contexts, b.contexts) and np.array_equal(a.actions, b.actions)


def test_synth_longer_halflife_is_smoother():
    rough = synth_expert(SynthConfig(smoothing_halflife=1, seed=5))
    smooth = synth_expert(SynthConfig(smoothing_halflife=20, seed=5))
    assert smoothness(smooth.actions) < smoothness(rough.actions)


def test_synth_smoothness_monotone_in_halflife():
    vals = [smoothness(synth_expert(SynthConfig(smoothing_halflife=h, seed=9)).actions) for h in (0, 1, 2, 5, 10, 20)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_synth_rejects_short_horizon():
    with pytest.raises(ValueError):
        SynthConfig(T=1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_synth_invariants_any_seed(seed):
    tr = synth_expert(SynthConfig(T=40, seed=seed))
    assert tr.T == 40
    assert np.all(tr.actions >= 0) and np.all(tr.actions <= tr.action_bound)
    assert np.all(np.isfinite(tr.contexts))
