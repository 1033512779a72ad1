"""Context/action sequences, state construction, file I/O and the synthetic expert."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter


class TrajectoryError(ValueError):
    """Raised for malformed trajectory data or files."""


def _as_columns(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


@dataclass(frozen=True)
class Trajectory:
    """Paired context sequence ``X`` (T x m) and action sequence ``A`` (T x k).

    Every action coordinate lies in ``[0, action_bound]``.
    """

    contexts: np.ndarray
    actions: np.ndarray
    action_bound: float = 1.0

    def __post_init__(self):
        X = _as_columns(self.contexts)
        A = _as_columns(self.actions)
        if X.shape[0] != A.shape[0]:
            raise TrajectoryError(
                f"contexts and actions differ in length: {X.shape[0]} vs {A.shape[0]}"
            )
        if X.shape[0] < 2:
            raise TrajectoryError(f"a trajectory needs T >= 2 steps, got {X.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(A))):
            raise TrajectoryError("non-finite values in trajectory")
        if self.action_bound <= 0:
            raise TrajectoryError("action_bound must be positive")
        if A.min() < 0 or A.max() > self.action_bound:
            raise TrajectoryError(f"actions outside [0, {self.action_bound}]")
        X.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "contexts", X)
        object.__setattr__(self, "actions", A)

    @property
    def T(self) -> int:
        return self.contexts.shape[0]

    @property
    def m(self) -> int:
        return self.contexts.shape[1]

    @property
    def k(self) -> int:
        return self.actions.shape[1]


@dataclass(frozen=True)
class StateLayout:
    """Shape of a flattened state ``[x_t, ..., x_{t-p}, a_{t-1}, ..., a_{t-q}]``.

    Both windows are stored newest first.
    """

    p: int
    q: int
    m: int
    k: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError("window lengths p, q must be non-negative")
        if self.m < 1 or self.k < 1:
            raise ValueError("context and action dimensions must be >= 1")

    @property
    def n_context(self) -> int:
        return (self.p + 1) * self.m

    @property
    def n_action(self) -> int:
        return self.q * self.k

    @property
    def dim(self) -> int:
        return self.n_context + self.n_action

    def action_window(self, states: np.ndarray) -> np.ndarray:
        """Return past actions of ``states`` (n x dim) as an (n, q, k) array, newest first."""
        states = np.atleast_2d(states)
        return states[:, self.n_context:].reshape(states.shape[0], self.q, self.k)

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "m": self.m, "k": self.k}


def context_windows(contexts: np.ndarray, p: int) -> np.ndarray:
    """Stack ``x_t, x_{t-1}, ..., x_{t-p}`` for every t; indices below 0 repeat ``x_0``."""
    X = _as_columns(contexts)
    T = X.shape[0]
    rows = np.arange(T)[:, None] - np.arange(p + 1)[None, :]
    return X[np.maximum(rows, 0)].reshape(T, -1)


def action_windows(actions: np.ndarray, q: int, a0) -> np.ndarray:
    """Stack ``a_{t-1}, ..., a_{t-q}`` for every t; indices below 0 use ``a0``."""
    A = _as_columns(actions)
    T, k = A.shape
    padded = np.vstack([np.tile(np.reshape(a0, (1, k)), (max(q, 1), 1)), A])
    rows = np.arange(T)[:, None] - 1 - np.arange(q)[None, :] + max(q, 1)
    return padded[rows].reshape(T, q * k)


def make_state(traj: Trajectory, t: int, p: int, q: int, a0=None) -> np.ndarray:
    """Flattened state at (0-based) step ``t``: context window ending at ``x_t``,
    action window ending at ``a_{t-1}``.

    Out-of-range history repeats ``x_0`` for contexts and ``a0`` for actions;
    ``a0`` defaults to the trajectory's first action.
    """
    if not 0 <= t < traj.T:
        raise IndexError(f"time index {t} outside [0, {traj.T - 1}]")
    a0 = traj.actions[0] if a0 is None else np.asarray(a0, dtype=float)
    ctx = [traj.contexts[max(t - i, 0)] for i in range(p + 1)]
    act = [traj.actions[t - i] if t - i >= 0 else a0 for i in range(1, q + 1)]
    return np.concatenate([np.ravel(v) for v in ctx + act])


def state_matrix(contexts: np.ndarray, actions: np.ndarray, p: int, q: int, a0=None) -> np.ndarray:
    """All states of a sequence at once, one row per step (same layout as :func:`make_state`)."""
    A = _as_columns(actions)
    a0 = A[0] if a0 is None else a0
    return np.hstack([context_windows(contexts, p), action_windows(A, q, a0)])


# --------------------------------------------------------------------------- I/O


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "jsonl"):
            raise TrajectoryError(f"unknown trajectory format {fmt!r}")
        return fmt
    return "jsonl" if path.suffix.lower() in (".jsonl", ".json", ".ndjson") else "csv"


def _check_bounds(action, bound: float, line: int):
    if any(a < 0 or a > bound for a in action):
        raise TrajectoryError(f"line {line}: action {list(action)} outside [0, {bound}]")


def load_trajectory(
    path,
    fmt: str | None = None,
    *,
    n_context: int | None = None,
    n_action: int | None = None,
    action_bound: float = 1.0,
) -> Trajectory:
    """Read a trajectory from CSV or JSON-lines.

    CSV files may start with a header ``x_1..x_m,a_1..a_k``; without one the
    split is taken from ``n_context``/``n_action`` (default: one action column).
    Errors name the offending line.
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    xs, As = [], []
    with path.open(newline="") as fh:
        if fmt == "csv":
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
            if rows and rows[0][1] and rows[0][1][0].strip().lower().startswith("x"):
                header = [c.strip().lower() for c in rows[0][1]]
                n_context = sum(1 for c in header if c.startswith("x"))
                n_action = len(header) - n_context
                rows = rows[1:]
            for line, row in rows:
                try:
                    vals = [float(c) for c in row]
                except ValueError:
                    raise TrajectoryError(f"line {line}: non-numeric value in {row}") from None
                k = n_action if n_action is not None else (len(vals) - n_context if n_context else 1)
                m = n_context if n_context is not None else len(vals) - k
                if m < 1 or k < 1 or len(vals) != m + k:
                    raise TrajectoryError(f"line {line}: expected {m}+{k} columns, got {len(vals)}")
                n_context, n_action = m, k
                _check_bounds(vals[m:], action_bound, line)
                xs.append(vals[:m])
                As.append(vals[m:])
        else:
            for line, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    obj = json.loads(raw)
                    x = [float(v) for v in np.atleast_1d(obj["x"])]
                    a = [float(v) for v in np.atleast_1d(obj["a"])]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise TrajectoryError(f"line {line}: malformed record ({exc})") from None
                if xs and (len(x) != len(xs[0]) or len(a) != len(As[0])):
                    raise TrajectoryError(f"line {line}: inconsistent dimensions")
                _check_bounds(a, action_bound, line)
                xs.append(x)
                As.append(a)
    if not xs:
        raise TrajectoryError(f"{path}: no rows")
    return Trajectory(np.array(xs), np.array(As), action_bound)


def format_trajectory(traj: Trajectory, fmt: str = "csv") -> str:
    """Serialize to CSV (with an ``x_i,...,a_j`` header) or JSON lines."""
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(traj.m)] + [f"a_{i + 1}" for i in range(traj.k)])
        for x, a in zip(traj.contexts, traj.actions):
            w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in a])
    elif fmt == "jsonl":
        for x, a in zip(traj.contexts, traj.actions):
            buf.write(json.dumps({"x": x.tolist(), "a": a.tolist()}) + "\n")
    else:
        raise ValueError(f"unknown trajectory format {fmt!r}")
    return buf.getvalue()


def save_trajectory(traj: Trajectory, path, fmt: str | None = None) -> None:
    path = Path(path)
    path.write_text(format_trajectory(traj, _infer_format(path, fmt)))


# ------------------------------------------------------------------ synthetic data


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic tracking task: a noisy bounded random walk observed as context,
    with a smoothed version of the clean walk as the expert's actions."""

    T: int = 200
    m: int = 1
    noise_std: float = 0.05
    smoothing_halflife: float = 5.0
    step_std: float = 0.03
    action_bound: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")
        if self.m < 1:
            raise ValueError("context_dim m must be >= 1")
        if self.noise_std < 0 or self.step_std < 0:
            raise ValueError("noise_std and step_std must be >= 0")
        if self.smoothing_halflife < 0:
            raise ValueError("smoothing_halflife must be >= 0")
        if self.action_bound <= 0:
            raise ValueError("action_bound must be positive")


def _reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    y = np.mod(x - lo, 2 * span)
    return lo + np.where(y > span, 2 * span - y, y)


def _ema_forward_backward(y: np.ndarray, halflife: float) -> np.ndarray:
    if halflife <= 0:
        return y.copy()
    alpha = 1.0 - 0.5 ** (1.0 / halflife)
    b, a = [alpha], [1.0, alpha - 1.0]
    fwd, _ = lfilter(b, a, y, zi=[(1.0 - alpha) * y[0]])
    bwd, _ = lfilter(b, a, fwd[::-1], zi=[(1.0 - alpha) * fwd[-1]])
    return bwd[::-1]


def synth_expert(cfg: SynthConfig) -> Trajectory:
    """Generate a synthetic demonstration; identical seeds give identical output."""
    rng = np.random.default_rng(cfg.seed)
    R = cfg.action_bound
    start = rng.uniform(0.25 * R, 0.75 * R)
    steps = rng.normal(0.0, cfg.step_std * R, size=cfg.T - 1)
    walk = np.empty(cfg.T)
    walk[0] = start
    # reflect step by step so the path never leaves [0, R]
    for t, d in enumerate(steps, start=1):
        walk[t] = _reflect(np.array(walk[t - 1] + d), 0.0, R)
    noise = rng.normal(0.0, cfg.noise_std * R, size=(cfg.T, cfg.m))
    contexts = walk[:, None] + noise
    actions = np.clip(_ema_forward_backward(walk, cfg.smoothing_halflife), 0.0, R)
    return Trajectory(contexts, actions[:, None], R)
