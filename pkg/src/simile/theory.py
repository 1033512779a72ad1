"""Numeric checks of the stability and policy-improvement guarantees.

Every population constant (gamma, epsilon, L) is replaced by an estimate over the
states a roll-out actually visits, so the checks here are empirical.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

BETA_MIN, BETA_MAX = 0.01, 0.99


class ContractionError(ValueError):
    """The policy is not a contraction in its past actions (gamma >= 1)."""


@dataclass(frozen=True)
class Lemma1Report:
    n_pairs: int
    n_violations: int
    max_violation: float
    negative_values: int
    degenerate: bool

    @property
    def ok(self) -> bool:
        return self.n_violations == 0 and self.negative_values == 0


def check_lemma1(fn: Callable, H: float, pairs, tol: float = 1e-9) -> Lemma1Report:
    """Evaluate ``(phi(a) - phi(b))^2 <= 6 H (phi(a) + phi(b)) ||a - b||^2`` on sample pairs.

    ``pairs`` is an (n, 2) array of scalars or (n, 2, d) of vectors; ``fn`` must be
    vectorized over the leading axis. ``degenerate`` flags ``H`` too small for
    the bound to carry information.
    """
    P = np.asarray(pairs, dtype=float)
    a, b = P[:, 0], P[:, 1]
    fa, fb = np.asarray(fn(a), dtype=float), np.asarray(fn(b), dtype=float)
    dist2 = np.sum((a - b).reshape(len(P), -1) ** 2, axis=1)
    lhs = (fa - fb) ** 2
    rhs = 6.0 * H * (fa + fb) * dist2
    excess = lhs - rhs
    return Lemma1Report(
        n_pairs=len(P),
        n_violations=int(np.sum(excess > tol)),
        max_violation=float(excess.max()) if len(P) else 0.0,
        negative_values=int(np.sum(fa < 0) + np.sum(fb < 0)),
        degenerate=bool(H <= 1e-8),
    )


def theorem1_bound(beta: float, epsilon: float, L: float, T: int, reduction_term: float) -> float:
    """Horizon-dependent bound ``beta * eps * L * T + beta * (l(pi_hat) - l(pi))``."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    return beta * epsilon * L * T + beta * reduction_term


def theorem2_bound(beta: float, gamma: float, epsilon: float, L: float, reduction_term: float) -> float:
    """Horizon-free bound for a gamma-contraction:
    ``beta*gamma*eps*L / ((1-beta)(1-gamma)) + beta * (l(pi_hat) - l(pi))``."""
    if gamma >= 1.0:
        raise ContractionError(f"contraction violated: gamma={gamma:.4g} >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    return beta * gamma * epsilon * L / ((1 - beta) * (1 - gamma)) + beta * reduction_term


@dataclass(frozen=True)
class StepSize:
    beta: float
    bound: float
    flag: str | None = None


def corollary2_beta(Delta: float, delta: float, beta_min: float = BETA_MIN) -> StepSize:
    """Step size ``(Delta - delta) / (2 Delta)`` and its guaranteed change
    ``-(Delta - delta)^2 / (2 (Delta + delta))``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if Delta <= 0:
        return StepSize(beta_min, 0.0, "no reduction available")
    if delta >= Delta:
        return StepSize(beta_min, 0.0, "no guaranteed improvement")
    beta = (Delta - delta) / (2 * Delta)
    bound = -((Delta - delta) ** 2) / (2 * (Delta + delta))
    if beta < beta_min:
        return StepSize(beta_min, bound, "clamped")
    return StepSize(beta, bound)


def estimate_gamma(
    policy,
    states,
    perturbation: float = 0.05,
    n_directions: int = 8,
    seed: int = 0,
) -> float:
    """Finite-difference Lipschitz constant of ``policy`` in the past-action window.

    For each state the action window is moved by ``perturbation`` along every
    coordinate axis (both signs) and ``n_directions`` random unit directions;
    returns the largest ``||pi(s + u) - pi(s)|| / ||u||``.
    """
    S = np.atleast_2d(np.asarray(states, dtype=float))
    if S.shape[0] == 0:
        raise ValueError("need at least one state")
    if perturbation <= 0:
        raise ValueError("perturbation must be positive")
    layout = policy.layout
    n_act = layout.n_action
    if n_act == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    axes = np.vstack([np.eye(n_act), -np.eye(n_act)])
    rand = rng.normal(size=(n_directions, n_act))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    dirs = np.vstack([axes, rand]) * perturbation

    base = policy.predict(S)
    n, nd = S.shape[0], dirs.shape[0]
    moved = np.repeat(S, nd, axis=0)
    moved[:, layout.n_context:] += np.tile(dirs, (n, 1))
    out = policy.predict(moved).reshape(n, nd, -1)
    ratio = np.linalg.norm(out - base[:, None, :], axis=2) / perturbation
    return float(ratio.max())


@dataclass(frozen=True)
class TheoryEstimates:
    """Per-iteration plug-in estimates and the bounds they imply.

    ``loss_old`` is the current policy's loss on its own roll-out, ``loss_new_on_old``
    the new policy's loss on those same states, ``reduction = loss_old - loss_new_on_old``.
    Bounds are ``None`` when their preconditions fail (see ``flags``).
    """

    gamma: float
    epsilon: float
    lipschitz_L: float
    loss_old: float
    loss_new_on_old: float
    reduction: float
    delta: float | None
    theorem2_bound: float | None
    corollary2_beta: float | None
    corollary2_bound: float | None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d


def estimate_theory(
    prev_policy,
    new_policy,
    states,
    rolled,
    expert,
    beta: float,
    *,
    perturbation: float = 0.05,
    seed: int = 0,
) -> TheoryEstimates:
    """Plug-in estimates on the states visited by ``prev_policy``'s roll-out ``rolled``.

    ``epsilon`` is the largest disagreement between the two policies on those
    states, ``L`` is ``2 * max ||a_t - a*_t||`` (Lipschitz constant of the
    squared loss over the visited region), and ``gamma`` the larger of the two
    policies' finite-difference estimates.
    """
    S = np.atleast_2d(states)
    A, E = np.asarray(rolled, dtype=float), np.asarray(expert, dtype=float)
    A, E = A.reshape(len(S), -1), E.reshape(len(S), -1)
    new_pred = new_policy.predict(S)
    epsilon = float(np.max(np.linalg.norm(new_pred - A, axis=1)))
    L = 2.0 * float(np.max(np.linalg.norm(A - E, axis=1)))
    gamma = max(
        estimate_gamma(prev_policy, S, perturbation, seed=seed),
        estimate_gamma(new_policy, S, perturbation, seed=seed),
    )
    loss_old = float(np.mean(np.sum((A - E) ** 2, axis=1)))
    loss_new = float(np.mean(np.sum((new_pred - E) ** 2, axis=1)))
    reduction = loss_old - loss_new
    flags = []
    delta = bound = c_beta = c_bound = None
    if gamma >= 1.0:
        flags.append("contraction violated")
    else:
        delta = gamma * epsilon * L / (1 - gamma)
        if 0.0 < beta < 1.0:
            bound = theorem2_bound(beta, gamma, epsilon, L, -reduction)
        step = corollary2_beta(reduction, delta)
        c_beta, c_bound = step.beta, step.bound
        if step.flag:
            flags.append(step.flag)
    return TheoryEstimates(gamma, epsilon, L, loss_old, loss_new, reduction, delta, bound, c_beta, c_bound, tuple(flags))
