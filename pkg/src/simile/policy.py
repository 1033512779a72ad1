"""Policy ensembles, deterministic/stochastic interpolation and sequential roll-out."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .autoregressor import LinearAutoregressor
from .forest import ForestStack, SmoothForest
from .trajectory import StateLayout, context_windows

PRUNE_BELOW = 1e-12
POLICY_FORMAT = "simile-policy"
POLICY_VERSION = 1


class Policy(Protocol):
    layout: StateLayout

    def predict(self, states) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class AffinePolicy:
    """Closed-form smooth policy ``(W x_window + b + lam * h(a)) / (1 + lam)``.

    ``f`` is affine in the context window and ignores past actions, so the
    policy is affine in ``a`` with Lipschitz constant ``lam / (1 + lam) * ||c||``.
    No clipping is applied.
    """

    weights: np.ndarray
    bias: np.ndarray
    lam: float
    autoregressor: LinearAutoregressor
    layout: StateLayout

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.atleast_1d(np.asarray(self.bias, dtype=float))
        if W.shape != (self.layout.k, self.layout.n_context) or b.shape != (self.layout.k,):
            raise ValueError("weights/bias shapes do not match the layout")
        if self.autoregressor.tau > self.layout.q:
            raise ValueError("autoregressor needs more past actions than the state holds")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)

    def predict(self, states) -> np.ndarray:
        X = np.atleast_2d(np.asarray(states, dtype=float))
        if X.shape[1] != self.layout.dim:
            raise ValueError(f"state dimension {X.shape[1]} != expected {self.layout.dim}")
        f = X[:, : self.layout.n_context] @ self.weights.T + self.bias
        window = self.layout.action_window(X)[:, : self.autoregressor.tau, :]
        h = np.einsum("nik,ki->nk", window, self.autoregressor.coeffs)
        return (f + self.lam * h) / (1 + self.lam)


@dataclass(frozen=True, eq=False)
class EnsemblePolicy:
    """Convex combination ``sum_i w_i * pi_i`` of member policies."""

    members: tuple
    weights: tuple
    _stack: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        members, weights = tuple(self.members), tuple(float(w) for w in self.weights)
        if not members or len(members) != len(weights):
            raise ValueError("need one weight per member and at least one member")
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must lie on the simplex, got sum {sum(weights)!r}")
        layout = members[0].layout
        if any(m.layout != layout for m in members):
            raise ValueError("all members must share a state layout")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights", weights)
        if all(isinstance(m, SmoothForest) for m in members):
            object.__setattr__(self, "_stack", ForestStack(members, weights))

    @classmethod
    def single(cls, member) -> "EnsemblePolicy":
        return cls((member,), (1.0,))

    @property
    def layout(self) -> StateLayout:
        return self.members[0].layout

    def __len__(self) -> int:
        return len(self.members)

    def member_predictions(self, states) -> np.ndarray:
        """Shape (n, n_members, k)."""
        if self._stack is not None:
            return self._stack.member_predictions(states)
        return np.stack([m.predict(states) for m in self.members], axis=1)

    def predict(self, states) -> np.ndarray:
        return np.einsum("nmk,m->nk", self.member_predictions(states), np.array(self.weights))

    # ----------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        if not all(isinstance(m, SmoothForest) for m in self.members):
            raise TypeError("only forest ensembles can be serialized")
        return {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "members": [{"weight": w, "forest": m.to_dict()} for m, w in zip(self.members, self.weights)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsemblePolicy":
        if d.get("format") != POLICY_FORMAT or d.get("version") != POLICY_VERSION:
            raise ValueError(f"unsupported policy document: {d.get('format')} v{d.get('version')}")
        members = [SmoothForest.from_dict(m["forest"]) for m in d["members"]]
        return cls(tuple(members), tuple(float(m["weight"]) for m in d["members"]))


def save_policy(policy: EnsemblePolicy, path) -> None:
    Path(path).write_text(json.dumps(policy.to_dict()) + "\n")


def load_policy(path) -> EnsemblePolicy:
    return EnsemblePolicy.from_dict(json.loads(Path(path).read_text()))


def interpolate(prev: EnsemblePolicy, new_member, beta: float) -> EnsemblePolicy:
    """``beta * new + (1 - beta) * prev`` as a flat weighted ensemble.

    Members whose weight drops below 1e-12 are pruned and the rest renormalized.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    members = list(prev.members) + [new_member]
    weights = [w * (1.0 - beta) for w in prev.weights] + [beta]
    keep = [i for i, w in enumerate(weights) if w >= PRUNE_BELOW]
    if len(keep) < len(weights):
        members = [members[i] for i in keep]
        total = sum(weights[i] for i in keep)
        weights = [weights[i] / total for i in keep]
    return EnsemblePolicy(tuple(members), tuple(weights))


@dataclass(frozen=True)
class RolloutResult:
    actions: np.ndarray
    states: np.ndarray | None = None


def _rollout(predict_step, layout: StateLayout, contexts, a0, keep_states: bool) -> RolloutResult:
    ctx = context_windows(contexts, layout.p)
    if ctx.shape[1] != layout.n_context:
        raise ValueError(f"context dimension does not match the policy layout (m={layout.m})")
    T, k, q = ctx.shape[0], layout.k, layout.q
    if T < 1:
        raise ValueError("need at least one context")
    a0 = np.broadcast_to(np.asarray(a0, dtype=float), (k,))
    window = np.tile(a0, q)
    actions = np.empty((T, k))
    states = np.empty((T, layout.dim)) if keep_states else None
    state = np.empty((1, layout.dim))
    for t in range(T):
        state[0, : layout.n_context] = ctx[t]
        state[0, layout.n_context :] = window
        if keep_states:
            states[t] = state[0]
        a = predict_step(t, state)
        actions[t] = a
        if q:
            window = np.concatenate([a, window[: (q - 1) * k]])
    return RolloutResult(actions, states)


def rollout_det(policy: Policy, contexts, a0, *, keep_states: bool = False) -> RolloutResult:
    """Run ``policy`` along ``contexts``, feeding back its own predictions.

    The state layout (``p``, ``q``) is the policy's own.
    """
    return _rollout(lambda t, s: policy.predict(s)[0], policy.layout, contexts, a0, keep_states)


def rollout_sto(
    policy: EnsemblePolicy,
    contexts,
    a0,
    seed: int,
    *,
    keep_states: bool = False,
) -> RolloutResult:
    """Stochastic interpolation: at every step one member, drawn by weight, acts alone."""
    rng = np.random.default_rng(seed)
    T = len(np.asarray(contexts))
    probs = np.array(policy.weights)
    picks = rng.choice(len(policy), size=T, p=probs / probs.sum())
    members = policy.members
    return _rollout(lambda t, s: members[picks[t]].predict(s)[0], policy.layout, contexts, a0, keep_states)
