"""Linear autoregressive smoothing regularizer ``h(a_{t-1:t-tau}) = sum_i c_i a_{t-i}``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinearAutoregressor:
    """Per-dimension AR coefficients.

    Attributes
    ----------
    coeffs : ndarray of shape (k, tau)
        ``coeffs[j, i]`` multiplies ``a_{t-1-i}`` in action dimension ``j``.
    ridge : float
        L2 penalty used when fitting (kept for provenance).
    """

    coeffs: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] < 1:
            raise ValueError(f"coeffs must be a (k, tau) matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("autoregressor coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def tau(self) -> int:
        return self.coeffs.shape[1]

    @property
    def k(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def identity(cls, k: int = 1) -> "LinearAutoregressor":
        """``h(a) = a``: one lag, unit coefficient."""
        return cls(np.ones((k, 1)))

    def to_dict(self) -> dict:
        return {"coeffs": self.coeffs.tolist(), "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearAutoregressor":
        return cls(np.array(d["coeffs"], dtype=float), float(d.get("ridge", 0.0)))


def _lag_design(seq: np.ndarray, tau: int) -> tuple[np.ndarray, np.ndarray]:
    # rows t = tau..T-1, columns a_{t-1}, ..., a_{t-tau}
    windows = np.lib.stride_tricks.sliding_window_view(seq, tau + 1)
    return windows[:, -2::-1], windows[:, -1]


def fit_autoregressor(actions, tau: int, ridge: float | None = None) -> LinearAutoregressor:
    """Ridge least-squares fit of the AR coefficients, one action dimension at a time.

    Minimizes ``sum_{t > tau} (a_t - sum_i c_i a_{t-i})^2 + ridge * ||c||^2`` through
    the normal equations. ``actions`` is a (T, k) array or a list of such arrays
    (segments are fit jointly; no lag crosses a segment boundary). ``ridge=None``
    uses ``1e-3 * T`` with T the total number of steps.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    is_segments = isinstance(actions, (list, tuple)) and len(actions) > 0 and np.ndim(actions[0]) >= 1
    segments = list(actions) if is_segments else [actions]
    segments = [np.asarray(s, dtype=float).reshape(len(s), -1) for s in segments]
    k = segments[0].shape[1]
    if any(s.shape[1] != k for s in segments):
        raise ValueError("all segments must share the action dimension")
    usable = [s for s in segments if s.shape[0] > tau]
    if not usable:
        raise ValueError(f"sequence length must exceed tau={tau}")
    if ridge is None:
        ridge = 1e-3 * sum(s.shape[0] for s in segments)
    if ridge < 0:
        raise ValueError("ridge must be >= 0")

    coeffs = np.empty((k, tau))
    for j in range(k):
        parts = [_lag_design(s[:, j], tau) for s in usable]
        Z = np.vstack([p[0] for p in parts])
        y = np.concatenate([p[1] for p in parts])
        gram = Z.T @ Z + ridge * np.eye(tau)
        if ridge == 0 and np.linalg.matrix_rank(gram) < tau:
            raise np.linalg.LinAlgError(
                "singular autoregressor normal equations; use ridge > 0"
            )
        coeffs[j] = np.linalg.solve(gram, Z.T @ y)
    return LinearAutoregressor(coeffs, float(ridge))


def predict_ar(h: LinearAutoregressor, recent) -> np.ndarray:
    """Evaluate ``sum_i c_i a_{t-i}`` given the last ``tau`` actions, newest first.

    ``recent`` has shape (tau, k), or (tau,) when k == 1. A leading batch axis
    (n, tau, k) is also accepted.
    """
    r = np.asarray(recent, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[-2:] != (h.tau, h.k):
        raise ValueError(
            f"expected the last {h.tau} actions of dimension {h.k}, got shape {r.shape}"
        )
    return np.einsum("...ik,ki->...k", r, h.coeffs)
