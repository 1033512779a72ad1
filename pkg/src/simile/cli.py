"""Command-line entry point: ``simile <subcommand> ...``.

Exit codes: 0 success, 1 failed check, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .checks import SuiteConfig, run_suite
from .experiments import compare_beta, compare_interp
from .forest import ForestConfig
from .metrics import imitation_loss, smoothness
from .policy import load_policy, rollout_det
from .training import SigmaSchedule, TrainingConfig, TrainingError, simile_train
from .trajectory import SynthConfig, TrajectoryError, format_trajectory, load_trajectory, synth_expert

log = logging.getLogger("simile")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def dumps(obj, **kw) -> str:
    return json.dumps(_finite(obj), default=_json_default, sort_keys=True, **kw)


# ------------------------------------------------------------------ data args


def _add_data_args(p, required: bool):
    p.add_argument("--data", required=required, help="trajectory file (.csv or .jsonl)")
    p.add_argument("--m", type=int, default=1, help="context columns in --data")
    p.add_argument("--k", type=int, default=1, help="action columns in --data")
    p.add_argument("--action-bound", type=float, default=1.0)


def _add_synth_args(p):
    p.add_argument("--T", type=int, default=200, help="trajectory length")
    p.add_argument("--noise", type=float, default=SynthConfig.noise_std, help="context noise std")
    p.add_argument("--halflife", type=float, default=SynthConfig.smoothing_halflife)


def _load(args):
    if getattr(args, "data", None):
        path = Path(args.data)
        if not path.is_file():
            raise UsageError(f"data file not found: {path}")
        return load_trajectory(path, n_context=args.m, n_action=args.k, action_bound=args.action_bound)
    return synth_expert(SynthConfig(T=args.T, noise_std=args.noise, smoothing_halflife=args.halflife, seed=args.seed))


def _parse_beta(text: str):
    if text == "adaptive":
        return "adaptive"
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"--beta must be 'adaptive' or a number, got {text!r}") from None


def _add_training_args(p, iters_default: int = 10):
    p.add_argument("--iters", type=int, default=iters_default)
    p.add_argument("--lambda", dest="lam", type=float, default=TrainingConfig.lam)
    p.add_argument("--tau", type=int, default=TrainingConfig.tau)
    p.add_argument("--p", type=int, default=TrainingConfig.p)
    p.add_argument("--q", type=int, default=TrainingConfig.q)
    p.add_argument("--sigma0", type=float, default=SigmaSchedule.sigma0)
    p.add_argument("--sigma-decay", type=float, default=SigmaSchedule.decay)
    p.add_argument("--trees", type=int, default=ForestConfig.n_trees)
    p.add_argument("--depth", type=int, default=ForestConfig.max_depth)
    p.add_argument("--min-leaf", type=int, default=ForestConfig.min_samples_leaf)
    p.add_argument("--leaf-mode", choices=["distance_only", "joint"], default="distance_only")
    p.add_argument("--context-splits", action="store_true", help="trees split on context features only")
    p.add_argument("--seed", type=int, default=0)


def _training_config(args, beta="adaptive") -> TrainingConfig:
    try:
        return TrainingConfig(
            n_iterations=args.iters,
            lam=args.lam,
            tau=args.tau,
            p=args.p,
            q=args.q,
            beta=beta,
            sigma=SigmaSchedule("geometric", args.sigma0, args.sigma_decay) if args.sigma0 > 0 else SigmaSchedule("zero"),
            forest=ForestConfig(
                n_trees=args.trees, max_depth=args.depth, min_samples_leaf=args.min_leaf,
                split_on_actions=not args.context_splits,
            ),
            leaf_mode=args.leaf_mode,
            seed=args.seed,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


# ----------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    try:
        traj = synth_expert(SynthConfig(T=args.T, m=args.m, noise_std=args.noise,
                                        smoothing_halflife=args.halflife, seed=args.seed))
    except ValueError as e:
        raise UsageError(str(e)) from None
    fmt = "jsonl" if Path(args.out).suffix.lower() in (".jsonl", ".json", ".ndjson") else "csv"
    write_atomic(args.out, format_trajectory(traj, fmt))
    print(f"T={traj.T} smoothness={smoothness(traj.actions):.6g} -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    traj = _load(args)
    cfg = _training_config(args, _parse_beta(args.beta))
    policy, records = simile_train(traj, cfg)
    write_atomic(args.out, dumps(policy.to_dict()) + "\n")
    if args.log:
        write_atomic(args.log, "".join(dumps(r.to_dict()) + "\n" for r in records))
    first, last = records[0], records[-1]
    print(f"iterations={len(records) - 1} members={len(policy)} "
          f"error {first.combined_error:.6g} -> {last.combined_error:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    path = Path(args.policy)
    if not path.is_file():
        raise UsageError(f"policy file not found: {path}")
    policy = load_policy(path)
    traj = _load(args)
    a = rollout_det(policy, traj.contexts, traj.actions[0]).actions
    report = {"imitation_loss": imitation_loss(a, traj.actions), "smoothness": smoothness(a),
              "expert_smoothness": smoothness(traj.actions), "T": traj.T, "members": len(policy)}
    text = dumps(report, indent=2) + "\n"
    if args.out:
        write_atomic(args.out, text)
    print(text, end="")
    return EXIT_OK


def cmd_compare_beta(args) -> int:
    traj = _load(args)
    betas = [_parse_beta(b.strip()) for b in args.betas.split(",") if b.strip()]
    if not betas:
        raise UsageError("--betas is empty")
    rows = compare_beta(traj, _training_config(args), betas)
    write_atomic(args.out, rows_to_csv(rows, ["iteration", "beta_mode", "combined_error"]))
    print(f"{len(rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_compare_interp(args) -> int:
    traj = _load(args)
    if not 0.0 < args.beta <= 1.0:
        raise UsageError("--beta must lie in (0, 1]")
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    rows = compare_interp(traj, _training_config(args), beta=args.beta, n_samples=args.samples)
    cols = ["iteration", "deterministic_error", "mean_stochastic_error", "stderr", "n_members", "flag"]
    write_atomic(args.out, rows_to_csv(rows, cols))
    print(f"{len(rows)} rows -> {args.out}")
    return EXIT_OK


def _parse_coeffs(text: str | None):
    if text is None:
        return None
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"--ar-coeffs must be comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--ar-coeffs is empty")
    return vals


def cmd_check_theory(args) -> int:
    if args.T < 2:
        raise UsageError("--T must be >= 2")
    cfg = SuiteConfig(seed=args.seed, T=args.T, n_iterations=args.iters, lam=args.lam,
                      ar_coeffs=_parse_coeffs(args.ar_coeffs))
    report = run_suite(cfg)
    text = dumps(report, indent=2) + "\n"
    if args.out:
        write_atomic(args.out, text)
    else:
        print(text, end="")
    for c in report["checks"]:
        status = c.get("status") if c["passed"] is None else ("pass" if c["passed"] else "FAIL")
        print(f"{c['name']}: {status}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simile", description="Smooth imitation learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic expert trajectory")
    p.add_argument("--out", required=True)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_synth_args(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a policy")
    _add_data_args(p, required=True)
    p.add_argument("--out", required=True, help="policy JSON")
    p.add_argument("--log", help="per-iteration records (JSON lines)")
    p.add_argument("--beta", default="adaptive", help="'adaptive' or a fixed value in (0, 1]")
    _add_training_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="roll out a saved policy on a trajectory")
    p.add_argument("--policy", required=True)
    _add_data_args(p, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-beta", help="adaptive vs fixed interpolation (long CSV)")
    _add_data_args(p, required=False)
    _add_synth_args(p)
    _add_training_args(p, iters_default=15)
    p.add_argument("--betas", default="adaptive,0.1,0.5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_beta)

    p = sub.add_parser("compare-interp", help="deterministic vs stochastic interpolation (CSV)")
    _add_data_args(p, required=False)
    _add_synth_args(p)
    _add_training_args(p)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_interp)

    p = sub.add_parser("check-theory", help="run the invariant suite, JSON report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=int, default=SuiteConfig.T)
    p.add_argument("--iters", type=int, default=SuiteConfig.n_iterations)
    p.add_argument("--lambda", dest="lam", type=float, default=SuiteConfig.lam)
    p.add_argument("--ar-coeffs", help="pin the autoregressor, e.g. 1.2")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"simile: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"simile {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrajectoryError, FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"simile {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as e:
        print(f"simile {args.command}: error: {e}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
