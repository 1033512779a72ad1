"""The executable invariant suite behind ``simile check-theory``.

Each check returns a dict with ``name``, ``asserted`` (whether it counts toward
the suite verdict), ``passed`` and check-specific detail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .autoregressor import LinearAutoregressor
from .forest import ForestConfig
from .metrics import imitation_loss
from .policy import AffinePolicy, EnsemblePolicy, interpolate, rollout_det, rollout_sto
from .theory import check_lemma1, estimate_gamma, theorem1_bound, theorem2_bound
from .training import TrainingConfig, simile_train
from .trajectory import StateLayout, SynthConfig, Trajectory, state_matrix, synth_expert

SLACK_REL, SLACK_ABS = 0.1, 1e-6


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    T: int = 200
    n_iterations: int = 10
    lam: float = 2.0
    ar_coeffs: tuple | None = None
    lemma1_pairs: int = 10_000
    mc_T: int = 100
    mc_samples: int = 500
    min_fraction: float = 0.9
    # per-step z threshold; None spreads a 3-sigma family-wise level over the steps
    step_z: float | None = None


def step_threshold(cfg: SuiteConfig) -> float:
    if cfg.step_z is not None:
        return cfg.step_z
    return float(norm.isf(norm.sf(3.0) / cfg.mc_T))


def reference_config(cfg: SuiteConfig) -> TrainingConfig:
    """Training setup used by the bound checks.

    Trees split on context only, so every learned policy is a contraction in
    its past actions whenever ``lam/(1+lam) * |c| < 1``.
    """
    return TrainingConfig(
        n_iterations=cfg.n_iterations,
        lam=cfg.lam,
        q=1,
        seed=cfg.seed,
        ar_coeffs=cfg.ar_coeffs,
        forest=ForestConfig(split_on_actions=False),
    )


def _softplus(a):
    return np.logaddexp(0.0, a)


LEMMA1_FUNCTIONS = {
    "a^2": (lambda a: a**2, 2.0),
    "1+sin^2(a)": (lambda a: 1.0 + np.sin(a) ** 2, 2.0),
    "softplus": (_softplus, 0.25),
}


def check_lemma1_suite(cfg: SuiteConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    detail = {}
    for name, (fn, H) in LEMMA1_FUNCTIONS.items():
        pairs = rng.uniform(-3.0, 3.0, size=(cfg.lemma1_pairs, 2))
        rep = check_lemma1(fn, H, pairs)
        detail[name] = {"H": H, "violations": rep.n_violations, "max_excess": rep.max_violation}
    passed = all(d["violations"] == 0 for d in detail.values())
    return {"name": "lemma1", "asserted": True, "passed": passed, "functions": detail}


def check_bound_monotonicity(cfg: SuiteConfig) -> dict:
    eps = np.linspace(0.0, 2.0, 21)
    Ls = np.linspace(0.0, 4.0, 21)
    ok = True
    for beta, gamma, red in [(0.1, 0.3, -0.5), (0.5, 0.8, 0.2), (0.9, 0.0, -1.0)]:
        b2e = [theorem2_bound(beta, gamma, e, 1.0, red) for e in eps]
        b2l = [theorem2_bound(beta, gamma, 0.5, L, red) for L in Ls]
        b1e = [theorem1_bound(beta, e, 1.0, 100, red) for e in eps]
        b1l = [theorem1_bound(beta, 0.5, L, 100, red) for L in Ls]
        ok &= all(np.all(np.diff(b) >= 0) for b in (b2e, b2l, b1e, b1l))
    return {"name": "bound_monotonicity", "asserted": True, "passed": bool(ok)}


def _affine_mixture(lam: float, c: float):
    layout = StateLayout(p=1, q=1, m=1, k=1)
    ar = LinearAutoregressor(np.array([[c]]))
    a = AffinePolicy(np.array([[0.6, 0.2]]), np.array([0.1]), lam, ar, layout)
    b = AffinePolicy(np.array([[0.1, 0.3]]), np.array([0.35]), lam, ar, layout)
    return EnsemblePolicy((a, b), (0.5, 0.5)), layout


def check_gamma_closed_form(cfg: SuiteConfig) -> dict:
    lam, c = cfg.lam, 0.9
    policy, layout = _affine_mixture(lam, c)
    traj = synth_expert(SynthConfig(T=50, seed=cfg.seed))
    S = state_matrix(traj.contexts, traj.actions, layout.p, layout.q)
    est = estimate_gamma(policy, S, seed=cfg.seed)
    exact = lam / (1 + lam) * abs(c)
    return {"name": "gamma_closed_form", "asserted": True, "passed": bool(abs(est - exact) <= 1e-9 * max(1.0, exact)),
            "estimate": est, "exact": exact}


def check_stochastic_vs_deterministic(cfg: SuiteConfig) -> dict:
    """Affine two-member mixture: the stochastic roll-out's mean is the deterministic roll-out."""
    policy, _ = _affine_mixture(cfg.lam, 0.9)
    traj = synth_expert(SynthConfig(T=cfg.mc_T, seed=cfg.seed))
    a0 = traj.actions[0]
    det = rollout_det(policy, traj.contexts, a0).actions[:, 0]
    seeds = np.random.SeedSequence([cfg.seed, 7]).generate_state(cfg.mc_samples)
    sto = np.stack([rollout_sto(policy, traj.contexts, a0, int(s)).actions[:, 0] for s in seeds])
    n = cfg.mc_samples
    se = sto.std(axis=0, ddof=1) / math.sqrt(n)
    z_max = step_threshold(cfg)
    z = np.abs(sto.mean(axis=0) - det)
    step_ok = z <= z_max * se + 1e-12
    det_loss = imitation_loss(det, traj.actions)
    losses = np.array([imitation_loss(s, traj.actions) for s in sto])
    loss_se = float(losses.std(ddof=1) / math.sqrt(n))
    loss_ok = det_loss <= losses.mean() + 3 * loss_se
    return {
        "name": "stochastic_vs_deterministic",
        "asserted": True,
        "passed": bool(step_ok.all() and loss_ok),
        "step_z": z_max,
        "steps_outside": int((~step_ok).sum()),
        "max_step_z": float(np.max(z / np.maximum(se, 1e-300))),
        "deterministic_loss": det_loss,
        "mean_stochastic_loss": float(losses.mean()),
        "stderr": loss_se,
    }


def _reference_run(cfg: SuiteConfig):
    train = synth_expert(SynthConfig(T=cfg.T, seed=cfg.seed))
    tcfg = reference_config(cfg)
    extras = []
    _, records = simile_train(train, tcfg, on_iteration=lambda r, p, ex: extras.append((p, ex)))
    return train, tcfg, records, extras


def check_feedback_descent(records) -> dict:
    vals = [r.feedback_alignment for r in records[1:]]
    return {"name": "feedback_descent", "asserted": True, "passed": all(v <= 0 for v in vals),
            "max_alignment": max(vals) if vals else None}


def _slack(bound: float) -> float:
    return SLACK_REL * abs(bound) + SLACK_ABS


def check_theorem2(records, min_fraction: float) -> dict:
    rows, n_ok, n_applicable, violated = [], 0, 0, False
    for prev, rec in zip(records, records[1:]):
        th = rec.theory
        improvement = rec.combined_error - prev.combined_error
        row = {"iteration": rec.iteration, "gamma": th.gamma, "beta": rec.beta, "improvement": improvement,
               "bound": th.theorem2_bound}
        if th.theorem2_bound is None:
            row["status"] = "contraction violated" if "contraction violated" in th.flags else "not applicable"
            violated |= "contraction violated" in th.flags
        else:
            n_applicable += 1
            ok = improvement <= th.theorem2_bound + _slack(th.theorem2_bound)
            n_ok += ok
            row["status"] = "ok" if ok else "exceeded"
        rows.append(row)
    if violated:
        return {"name": "theorem2", "asserted": False, "passed": None, "status": "contraction violated",
                "iterations": rows}
    passed = n_applicable > 0 and n_ok >= math.ceil(min_fraction * n_applicable)
    return {"name": "theorem2", "asserted": True, "passed": bool(passed), "within_bound": n_ok,
            "applicable": n_applicable, "iterations": rows}


def check_corollary2(train: Trajectory, records, extras, min_fraction: float) -> dict:
    """Where the reduction beats the stability penalty, step with the corollary's beta."""
    rows, n_ok = [], 0
    for rec, (_, ex) in zip(records[1:], extras[1:]):
        th = rec.theory
        if th.delta is None or th.corollary2_beta is None or not th.reduction > th.delta:
            continue
        prev = ex["prev_policy"]
        stepped = interpolate(prev, ex["forest"], th.corollary2_beta)
        before = imitation_loss(ex["prev_rolled"][0], train.actions)
        after = imitation_loss(rollout_det(stepped, train.contexts, train.actions[0]).actions, train.actions)
        ok = after - before <= th.corollary2_bound + _slack(th.corollary2_bound)
        n_ok += ok
        rows.append({"iteration": rec.iteration, "beta": th.corollary2_beta, "improvement": after - before,
                     "bound": th.corollary2_bound, "status": "ok" if ok else "exceeded"})
    if not rows:
        return {"name": "corollary2", "asserted": False, "passed": None, "status": "no applicable iteration",
                "iterations": rows}
    passed = n_ok >= math.ceil(min_fraction * len(rows))
    return {"name": "corollary2", "asserted": True, "passed": bool(passed), "iterations": rows}


def run_suite(cfg: SuiteConfig = SuiteConfig()) -> dict:
    checks = [check_lemma1_suite(cfg), check_bound_monotonicity(cfg), check_gamma_closed_form(cfg),
              check_stochastic_vs_deterministic(cfg)]
    train, _, records, extras = _reference_run(cfg)
    checks += [check_feedback_descent(records), check_theorem2(records, cfg.min_fraction),
               check_corollary2(train, records, extras, cfg.min_fraction)]
    passed = all(c["passed"] for c in checks if c["asserted"])
    return {"passed": bool(passed), "config": {k: v for k, v in vars(cfg).items()}, "checks": checks}
