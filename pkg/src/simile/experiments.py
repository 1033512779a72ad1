"""Reproducible experiment drivers shared by the CLI and the acceptance suite.

Every driver returns plain rows (lists of dicts) so callers can write CSV/JSON
without knowing the experiment's internals.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from .autoregressor import LinearAutoregressor
from .forest import ForestConfig, SmoothForest, Tree
from .metrics import imitation_loss, smoothness
from .policy import EnsemblePolicy, rollout_det, rollout_sto
from .training import SigmaSchedule, TrainingConfig, simile_train
from .trajectory import StateLayout, Trajectory


def _as_list(train) -> list[Trajectory]:
    return [train] if isinstance(train, Trajectory) else list(train)


def beta_label(beta) -> str:
    return "adaptive" if beta == "adaptive" else f"{float(beta):g}"


def compare_beta(train, cfg: TrainingConfig, betas: Sequence) -> list[dict]:
    """Train once per β setting on the same data and seed; one row per (β, iteration)."""
    if not betas:
        raise ValueError("empty beta grid")
    rows = []
    for beta in betas:
        _, records = simile_train(train, replace(cfg, beta=beta), with_theory=False)
        rows += [{"beta_mode": beta_label(beta), "iteration": r.iteration, "combined_error": r.combined_error}
                 for r in records]
    return sorted(rows, key=lambda r: (r["beta_mode"], r["iteration"]))


def iterations_to_converge(errors: Sequence[float], rel: float = 0.1) -> int:
    """First iteration whose error is within ``rel`` of the last one."""
    final = errors[-1]
    return next(i for i, e in enumerate(errors) if e <= (1 + rel) * final)


def stochastic_errors(policy: EnsemblePolicy, trajs: Sequence[Trajectory], n_samples: int, seed: int) -> np.ndarray:
    """Imitation loss of ``n_samples`` independent stochastic roll-outs."""
    seeds = np.random.SeedSequence(seed).generate_state(n_samples)
    out = np.empty(n_samples)
    for i, s in enumerate(seeds):
        losses = [imitation_loss(rollout_sto(policy, tr.contexts, tr.actions[0], int(s)).actions, tr.actions)
                  for tr in trajs]
        out[i] = float(np.mean(losses))
    return out


def compare_interp(train, cfg: TrainingConfig, beta: float = 0.5, n_samples: int = 50) -> list[dict]:
    """Deterministic vs stochastic interpolation of the same ensembles.

    A single training run supplies the ensemble of every iteration, so both arms
    share the training set of each round; they differ only in how the
    ensemble acts during evaluation.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    trajs = _as_list(train)
    rows = []

    def evaluate(rec, policy, extras):
        det = float(np.mean([imitation_loss(rollout_det(policy, tr.contexts, tr.actions[0]).actions, tr.actions)
                             for tr in trajs]))
        sto = stochastic_errors(policy, trajs, n_samples, seed=cfg.seed * 100_003 + rec.iteration)
        se = float(sto.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
        rows.append({
            "iteration": rec.iteration,
            "deterministic_error": det,
            "mean_stochastic_error": float(sto.mean()),
            "stderr": se,
            "n_members": len(policy),
            "flag": "" if n_samples > 1 else "single sample",
        })

    simile_train(trajs, replace(cfg, beta=float(beta)), on_iteration=evaluate, with_theory=False)
    return sorted(rows, key=lambda r: r["iteration"])


def first_round(train, cfg: TrainingConfig, sigma: float, init: EnsemblePolicy | None = None):
    """Run one round with feedback weight ``sigma``; return the newly trained forest."""
    got = {}
    one = replace(cfg, n_iterations=1, sigma=SigmaSchedule("constant", sigma0=sigma))
    simile_train(train, one, init=init, on_iteration=lambda r, p, ex: got.update(ex), with_theory=False)
    return got["forest"]


def _rollout_metrics(policy, trajs: Sequence[Trajectory]) -> tuple[float, float]:
    rolled = [rollout_det(policy, tr.contexts, tr.actions[0]).actions for tr in trajs]
    loss = float(np.mean([imitation_loss(a, tr.actions) for a, tr in zip(rolled, trajs)]))
    return loss, float(np.mean([smoothness(a) for a in rolled]))


def sigma_sweep(train, cfg: TrainingConfig, sigmas: Sequence[float] = (0.0, 0.25, 0.5, 0.75)) -> list[dict]:
    """Imitation and smoothness loss of the round-1 learner for each feedback weight."""
    trajs = _as_list(train)
    rows = []
    for sigma in sigmas:
        loss, smooth = _rollout_metrics(first_round(trajs, cfg, sigma), trajs)
        rows.append({"sigma": float(sigma), "imitation_loss": loss, "smoothness": smooth})
    return sorted(rows, key=lambda r: r["sigma"])


def count_inversions(values: Sequence[float], increasing: bool) -> int:
    """Adjacent pairs that break the expected monotone direction."""
    d = np.diff(np.asarray(values, dtype=float))
    return int(np.sum(d < 0) if increasing else np.sum(d > 0))


def constant_policy(layout: StateLayout, value, action_bound: float = 1.0) -> EnsemblePolicy:
    """A policy that always outputs ``value`` (a single-leaf tree with no smoothing)."""
    v = np.broadcast_to(np.asarray(value, dtype=float), (layout.k,))
    tree = Tree(np.array([-1]), np.array([np.nan]), np.array([-1]), np.array([-1]), v[None, :].copy())
    forest = SmoothForest((tree,), 0.0, LinearAutoregressor.identity(layout.k), layout, action_bound,
                          config=ForestConfig(n_trees=1, max_depth=0))
    return EnsemblePolicy.single(forest)


def smooth_feedback_effect(train, cfg: TrainingConfig, sigmas: Sequence[float] = (0.0, 0.75),
                           init_value: float | None = None) -> dict:
    """Start from a constant policy and compare round-1 learners across feedback weights.

    Also reports the measured feasibility proxies: the expert's own first-order
    difference and the gap between the initial roll-out and the expert.
    """
    trajs = _as_list(train)
    layout = StateLayout(cfg.p, cfg.q, trajs[0].m, trajs[0].k)
    if init_value is None:
        init_value = 0.5 * trajs[0].action_bound
    init = constant_policy(layout, init_value, trajs[0].action_bound)
    init_rolled = [rollout_det(init, tr.contexts, tr.actions[0]).actions for tr in trajs]
    gap = float(np.mean([np.mean(np.linalg.norm(tr.actions[1:] - a[:-1], axis=1))
                         for a, tr in zip(init_rolled, trajs)]))
    expert_ref = float(np.mean([smoothness(tr.actions) for tr in trajs]))
    out = {"gap": gap, "expert_smoothness": expert_ref, "runs": []}
    for sigma in sigmas:
        loss, smooth = _rollout_metrics(first_round(trajs, cfg, sigma, init=init), trajs)
        out["runs"].append({"sigma": float(sigma), "imitation_loss": loss, "smoothness": smooth})
    return out
