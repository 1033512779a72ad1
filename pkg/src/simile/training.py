"""The iterative smooth imitation loop: roll out, relabel, refit, train, interpolate."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .autoregressor import LinearAutoregressor, fit_autoregressor
from .forest import ForestConfig, train_forest
from .metrics import imitation_loss, smoothness
from .policy import EnsemblePolicy, interpolate, rollout_det
from .theory import BETA_MAX, BETA_MIN, TheoryEstimates, estimate_theory
from .trajectory import StateLayout, Trajectory, state_matrix

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SigmaSchedule:
    """Feedback mixing weight per iteration: ``geometric`` (sigma0 * decay**(n-1)),
    ``constant`` (sigma0) or ``zero``."""

    kind: str = "geometric"
    sigma0: float = 0.5
    decay: float = 0.5

    def __post_init__(self):
        if self.kind not in ("geometric", "constant", "zero"):
            raise ValueError(f"unknown sigma schedule {self.kind!r}")
        if not 0.0 <= self.sigma0 <= 1.0:
            raise ValueError("sigma0 must lie in [0, 1]")
        if self.kind == "geometric" and not 0.0 < self.decay < 1.0:
            raise ValueError("geometric decay must lie in (0, 1)")


def sigma_schedule_value(schedule: SigmaSchedule, n: int) -> float:
    if n < 1:
        raise ValueError("iterations are numbered from 1")
    if schedule.kind == "zero":
        return 0.0
    if schedule.kind == "constant":
        return schedule.sigma0
    return schedule.sigma0 * schedule.decay ** (n - 1)


@dataclass(frozen=True)
class TrainingConfig:
    n_iterations: int = 10
    lam: float = 2.0
    tau: int = 1
    ridge: float | None = None
    p: int = 2
    q: int = 2
    beta: str | float = "adaptive"
    sigma: SigmaSchedule = SigmaSchedule()
    forest: ForestConfig = ForestConfig()
    leaf_mode: str = "distance_only"
    seed: int = 0
    ar_coeffs: tuple | None = None  # pins h instead of refitting it each round
    gamma_perturbation: float = 0.05

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.tau < 1 or self.tau > self.q:
            raise ValueError(f"need 1 <= tau <= q, got tau={self.tau}, q={self.q}")
        if self.beta != "adaptive":
            b = float(self.beta)
            if not 0.0 < b <= 1.0:
                raise ValueError("a fixed beta must lie in (0, 1]")
            object.__setattr__(self, "beta", b)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    sigma: float | None
    beta: float | None
    error_new: float
    error_old: float
    combined_error: float
    smoothness: float
    feedback_alignment: float | None = None
    theory: TheoryEstimates | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theory"] = self.theory.to_dict() if self.theory is not None else None
        return d


def gen_feedback(rolled, expert, sigma: float) -> np.ndarray:
    """Virtual targets ``sigma * a_t + (1 - sigma) * a*_t``.

    Results are kept inside the segment between ``a_t`` and ``a*_t`` so that
    ``(a_t - a*_t) * (a_hat_t - a_t) <= 0`` holds exactly in floating point.
    """
    A, E = np.asarray(rolled, dtype=float), np.asarray(expert, dtype=float)
    if A.shape != E.shape:
        raise ValueError(f"length mismatch: {A.shape} vs {E.shape}")
    if not 0.0 <= sigma <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    mixed = sigma * A + (1.0 - sigma) * E
    return np.clip(mixed, np.minimum(A, E), np.maximum(A, E))


def adaptive_beta(error_new: float, error_old: float, beta_min: float = BETA_MIN, beta_max: float = BETA_MAX) -> float:
    """``error_old / (error_new + error_old)`` clipped to ``[beta_min, beta_max]``."""
    if error_new < 0 or error_old < 0:
        raise ValueError("errors must be non-negative")
    total = error_new + error_old
    if total == 0:
        log.info("both policies reproduce the expert exactly; using beta_min")
        return beta_min
    return float(min(max(error_old / total, beta_min), beta_max))


def _layout_for(trajs: Sequence[Trajectory], cfg: TrainingConfig) -> StateLayout:
    return StateLayout(cfg.p, cfg.q, trajs[0].m, trajs[0].k)


def _round_seed(seed: int, n: int, tag: int = 0) -> int:
    return int(np.random.SeedSequence([seed, tag, n]).generate_state(1)[0])


def _rollouts(policy, trajs: Sequence[Trajectory]) -> list[np.ndarray]:
    return [rollout_det(policy, tr.contexts, tr.actions[0]).actions for tr in trajs]


def _mse(rolled: list[np.ndarray], trajs: Sequence[Trajectory]) -> float:
    A = np.vstack(rolled)
    E = np.vstack([tr.actions for tr in trajs])
    err = imitation_loss(A, E)
    if not np.isfinite(err):
        raise TrainingError("non-finite roll-out error; check the data and lambda")
    return err


def _smoothness(rolled: list[np.ndarray]) -> float:
    return float(np.mean([smoothness(a) for a in rolled]))


def _fit_h(targets: list[np.ndarray], cfg: TrainingConfig, k: int) -> LinearAutoregressor:
    if cfg.ar_coeffs is not None:
        return LinearAutoregressor(np.broadcast_to(np.asarray(cfg.ar_coeffs, dtype=float), (k, len(cfg.ar_coeffs))))
    return fit_autoregressor(targets, cfg.tau, cfg.ridge)


def train_round(
    trajs: Sequence[Trajectory],
    rolled: list[np.ndarray],
    targets: list[np.ndarray],
    cfg: TrainingConfig,
    n: int,
):
    """Fit ``h`` on the targets and train a smooth forest on the roll-out states."""
    layout = _layout_for(trajs, cfg)
    h = _fit_h(targets, cfg, layout.k)
    S = np.vstack([state_matrix(tr.contexts, a, cfg.p, cfg.q, tr.actions[0]) for tr, a in zip(trajs, rolled)])
    Y = np.vstack(targets)
    forest_cfg = replace(cfg.forest, seed=_round_seed(cfg.seed, n))
    forest = train_forest(
        S, Y, h, cfg.lam, forest_cfg, layout, leaf_mode=cfg.leaf_mode, action_bound=trajs[0].action_bound
    )
    return forest, S


def initial_policy(trajs: Sequence[Trajectory], cfg: TrainingConfig) -> EnsemblePolicy:
    """pi_0: trained on expert states with the expert's own actions as targets."""
    expert = [tr.actions for tr in trajs]
    forest, _ = train_round(trajs, expert, expert, cfg, 0)
    return EnsemblePolicy.single(forest)


def _as_list(train) -> list[Trajectory]:
    trajs = [train] if isinstance(train, Trajectory) else list(train)
    if not trajs:
        raise ValueError("no training trajectories")
    if any(tr.m != trajs[0].m or tr.k != trajs[0].k for tr in trajs):
        raise ValueError("training trajectories must share dimensions")
    return trajs


def simile_train(
    train: Trajectory | Sequence[Trajectory],
    cfg: TrainingConfig,
    *,
    init: EnsemblePolicy | None = None,
    on_iteration: Callable[[IterationRecord, EnsemblePolicy, dict], None] | None = None,
    with_theory: bool = True,
) -> tuple[EnsemblePolicy, list[IterationRecord]]:
    """Run ``cfg.n_iterations`` rounds and return the final policy and one record per round.

    Record 0 describes the initial policy. ``init`` replaces the expert-trained
    initial policy. ``on_iteration(record, policy, extras)`` is called after every
    round; ``extras`` carries the round's new forest, states and targets.
    """
    trajs = _as_list(train)
    expert = [tr.actions for tr in trajs]
    policy = init if init is not None else initial_policy(trajs, cfg)
    rolled = _rollouts(policy, trajs)
    err = _mse(rolled, trajs)
    rec = IterationRecord(0, None, None, err, err, err, _smoothness(rolled))
    records = [rec]
    if on_iteration:
        on_iteration(rec, policy, {})

    for n in range(1, cfg.n_iterations + 1):
        error_old = err
        sigma = sigma_schedule_value(cfg.sigma, n)
        targets = [gen_feedback(a, e, sigma) for a, e in zip(rolled, expert)]
        forest, S = train_round(trajs, rolled, targets, cfg, n)
        new_rolled = _rollouts(forest, trajs)
        error_new = _mse(new_rolled, trajs)
        beta = adaptive_beta(error_new, error_old) if cfg.beta == "adaptive" else float(cfg.beta)
        prev = policy
        policy = interpolate(prev, forest, beta)

        theory = None
        if with_theory:
            theory = estimate_theory(
                prev, forest, S, np.vstack(rolled), np.vstack(expert), beta,
                perturbation=cfg.gamma_perturbation, seed=_round_seed(cfg.seed, n, tag=1),
            )
        align = float(np.mean(np.sum((np.vstack(rolled) - np.vstack(expert)) * (np.vstack(targets) - np.vstack(rolled)), axis=1)))
        prev_rolled = rolled
        rolled = _rollouts(policy, trajs)
        err = _mse(rolled, trajs)
        rec = IterationRecord(n, sigma, beta, error_new, error_old, err, _smoothness(rolled), align, theory)
        records.append(rec)
        log.info("iter %d sigma=%.3g beta=%.3g new=%.5g old=%.5g combined=%.5g", n, sigma, beta, error_new, error_old, err)
        if on_iteration:
            on_iteration(rec, policy, {"forest": forest, "states": S, "targets": targets,
                                        "prev_policy": prev, "prev_rolled": prev_rolled})
    return policy, records
