import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ar_normal_equations
from simile.autoregressor import LinearAutoregressor, fit_autoregressor, predict_ar


def test_constant_sequence_identity():
    h = fit_autoregressor(np.ones(4), tau=1, ridge=0)
    np.testing.assert_allclose(h.coeffs, [[1.0]])


def test_geometric_sequence():
    h = fit_autoregressor([1.0, 2, 4, 8], tau=1, ridge=0)
    np.testing.assert_allclose(h.coeffs, [[2.0]])


def test_huge_ridge_shrinks_to_zero():
    rng = np.random.default_rng(0)
    h = fit_autoregressor(rng.random(50), tau=3, ridge=1e12)
    assert np.all(np.abs(h.coeffs) < 1e-9)


def test_singular_without_ridge_advises_ridge():
    with pytest.raises(np.linalg.LinAlgError, match="ridge"):
        fit_autoregressor(np.zeros(10), tau=2, ridge=0)


def test_too_short():
    with pytest.raises(ValueError):
        fit_autoregressor([0.1, 0.2], tau=2, ridge=0)


def test_predict_examples():
    assert predict_ar(LinearAutoregressor.identity(1), [[0.3]])[0] == 0.3
    h = LinearAutoregressor(np.array([[0.5, 0.5]]))
    assert predict_ar(h, [2.0, 4.0])[0] == pytest.approx(3.0)
    assert predict_ar(LinearAutoregressor(np.zeros((1, 3))), [1.0, 2.0, 3.0])[0] == 0.0


def test_predict_wrong_history_length():
    h = LinearAutoregressor(np.array([[0.5, 0.5]]))
    with pytest.raises(ValueError):
        predict_ar(h, [1.0, 2.0, 3.0])


def test_per_dimension_fits_are_independent():
    rng = np.random.default_rng(2)
    A = rng.random((80, 2))
    h = fit_autoregressor(A, tau=2, ridge=0.1)
    for j in range(2):
        np.testing.assert_allclose(h.coeffs[j], fit_autoregressor(A[:, j], 2, 0.1).coeffs[0])


def test_default_ridge_scales_with_length():
    rng = np.random.default_rng(5)
    a = rng.random(120)
    np.testing.assert_allclose(fit_autoregressor(a, 2).coeffs, fit_autoregressor(a, 2, 1e-3 * 120).coeffs)


def test_matches_gram_oracle_on_random_sequences():
    rng = np.random.default_rng(123)
    for _ in range(100):
        T = int(rng.integers(10, 201))
        tau = int(rng.integers(1, 6))
        ridge = float(rng.choice([0.0, 0.01, 1.0]))
        seq = rng.random(T)
        got = fit_autoregressor(seq, tau, ridge).coeffs[0]
        want = ar_normal_equations(seq, tau, ridge)
        assert np.linalg.norm(got - want) <= 1e-8 * max(1.0, np.linalg.norm(want))


def test_residual_no_worse_than_random_coefficients():
    rng = np.random.default_rng(7)
    seq = np.cumsum(rng.normal(size=100)) * 0.01 + 0.5
    tau = 3
    c = fit_autoregressor(seq, tau, ridge=0).coeffs[0]

    def resid(coef):
        return sum((seq[t] - sum(coef[i] * seq[t - 1 - i] for i in range(tau))) ** 2 for t in range(tau, len(seq)))

    best = resid(c)
    for _ in range(100):
        assert best <= resid(c + rng.normal(scale=0.5, size=tau)) + 1e-12


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_predict_is_linear(u, v, alpha, beta):
    h = LinearAutoregressor(np.array([[0.7, -0.2, 0.4]]))
    u, v = np.array(u), np.array(v)
    lhs = predict_ar(h, alpha * u + beta * v)
    rhs = alpha * predict_ar(h, u) + beta * predict_ar(h, v)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_round_trip_dict():
    h = LinearAutoregressor(np.array([[0.25, 0.5], [1.0, -0.1]]))
    back = LinearAutoregressor.from_dict(h.to_dict())
    np.testing.assert_array_equal(back.coeffs, h.coeffs)
