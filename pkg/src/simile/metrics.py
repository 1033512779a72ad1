"""Trajectory losses and smoothness measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_seq(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def imitation_loss(actions, expert) -> float:
    """Mean over time of ``||a_t - a*_t||^2``."""
    A, E = _as_seq(actions), _as_seq(expert)
    if A.shape != E.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {E.shape}")
    return float(np.mean(np.sum((A - E) ** 2, axis=1)))


def smoothness(actions) -> float:
    """Mean Euclidean first-order difference ``||a_t - a_{t-1}||`` over t = 2..T."""
    A = _as_seq(actions)
    if A.shape[0] < 2:
        raise ValueError("smoothness needs at least two actions")
    return float(np.mean(np.linalg.norm(np.diff(A, axis=0), axis=1)))


def average_gap(actions, expert) -> float:
    """Mean ``||a*_t - a_{t-1}||``: how far the expert's next move is from the current trajectory."""
    A, E = _as_seq(actions), _as_seq(expert)
    if A.shape != E.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {E.shape}")
    return float(np.mean(np.linalg.norm(E[1:] - A[:-1], axis=1)))


def feedback_alignment(actions, expert, targets) -> float:
    """``(1/T) sum <a_t - a*_t, a_hat_t - a_t>``; non-positive when targets point toward the expert."""
    A, E, F = _as_seq(actions), _as_seq(expert), _as_seq(targets)
    return float(np.mean(np.sum((A - E) * (F - A), axis=1)))


@dataclass(frozen=True)
class SmoothnessReport:
    """Measured stand-ins for the feasibility quantities of smooth feedback.

    ``expert_reference`` is the expert's own first-order difference, ``gap`` the
    average distance from the previous rolled-out action to the expert's next
    one, and ``naive_error`` the error of a context-only regressor (when given).
    """

    mean_first_order_diff: float
    expert_reference: float
    gap: float
    naive_error: float | None = None


def smoothness_report(actions, expert, naive_error: float | None = None) -> SmoothnessReport:
    return SmoothnessReport(smoothness(actions), smoothness(expert), average_gap(actions, expert), naive_error)
