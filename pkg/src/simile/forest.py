"""Recurrent regression-tree ensembles smoothed toward a linear autoregressor.

Each tree leaf stores a constant ``a_bar``; a tree predicts
``(a_bar + lam * h(s)) / (1 + lam)`` where ``h(s)`` is the autoregressor applied
to the state's past actions. Trees may branch on any state coordinate, past
actions included.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .autoregressor import LinearAutoregressor, predict_ar
from .trajectory import StateLayout

LEAF_MODES = ("distance_only", "joint")
FOREST_FORMAT = "smooth-forest"
FOREST_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 5
    max_depth: int = 5
    min_samples_leaf: int = 5
    feature_fraction: float = 0.8
    bootstrap: bool = True
    seed: int = 0
    split_on_actions: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.feature_fraction <= 1:
            raise ValueError("feature_fraction must lie in (0, 1]")


def _check_mode(mode: str):
    if mode not in LEAF_MODES:
        raise ValueError(f"leaf mode must be one of {LEAF_MODES}, got {mode!r}")


def _as_rows(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


# ------------------------------------------------------------- node-level rules


def _leaf_targets(targets: np.ndarray, hvals: np.ndarray, lam: float, mode: str) -> np.ndarray:
    if mode == "joint":
        return targets
    return (1 + lam) * targets - lam * hvals


def leaf_value(targets, hvals, lam: float, mode: str = "distance_only") -> np.ndarray:
    """Terminal value of a node holding feedback targets and their h-values.

    ``distance_only`` minimizes the squared distance between the smoothed
    prediction and the targets, giving ``mean((1 + lam) * a_hat - lam * h)``.
    ``joint`` adds the smoothness penalty, which reduces to ``mean(a_hat)``.
    """
    _check_mode(mode)
    Y, Hv = _as_rows(targets), _as_rows(hvals)
    if Y.shape[0] == 0:
        raise ValueError("leaf_value called on an empty node")
    return _leaf_targets(Y, Hv, lam, mode).mean(axis=0)


def smoothed_predict(leaf, lam: float, h_value) -> np.ndarray:
    """``(a_bar + lam * h) / (1 + lam)``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return (np.asarray(leaf, dtype=float) + lam * np.asarray(h_value, dtype=float)) / (1 + lam)


def node_impurity(targets, hvals, lam: float, mode: str = "distance_only") -> float:
    """``sum (a_bar - a_hat)^2 + lam * (a_bar - h)^2`` over the node and action dims."""
    Y, Hv = _as_rows(targets), _as_rows(hvals)
    a_bar = leaf_value(Y, Hv, lam, mode)
    return float(np.sum((a_bar - Y) ** 2) + lam * np.sum((a_bar - Hv) ** 2))


class Split(NamedTuple):
    feature: int
    threshold: float
    reduction: float


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    return lo if mid >= hi else mid


def split_reduction(states, targets, hvals, lam, mode, feature, threshold) -> float:
    """Weighted impurity reduction of sending ``x[feature] <= threshold`` left."""
    X, Y, Hv = _as_rows(states), _as_rows(targets), _as_rows(hvals)
    go_left = X[:, feature] <= threshold
    n, n_l = len(Y), int(go_left.sum())
    n_r = n - n_l
    i_node = node_impurity(Y, Hv, lam, mode)
    i_left = node_impurity(Y[go_left], Hv[go_left], lam, mode)
    i_right = node_impurity(Y[~go_left], Hv[~go_left], lam, mode)
    return i_node - n_l / n * i_left - n_r / n * i_right


def best_split(
    states,
    targets,
    hvals,
    lam: float,
    mode: str = "distance_only",
    candidate_features: Sequence[int] | None = None,
    min_samples_leaf: int = 1,
) -> Split | None:
    """Exhaustive search over midpoints of consecutive distinct feature values.

    Returns the split with the largest weighted impurity reduction
    ``I_node - n_l/n * I_left - n_r/n * I_right`` (ties go to the lowest feature
    index, then the lowest threshold), or ``None`` when no admissible split has
    a strictly positive reduction.
    """
    _check_mode(mode)
    X, Y, Hv = _as_rows(states), _as_rows(targets), _as_rows(hvals)
    n = Y.shape[0]
    if n < 2 * min_samples_leaf or n < 2:
        return None
    features = range(X.shape[1]) if candidate_features is None else sorted(set(candidate_features))

    Z = _leaf_targets(Y, Hv, lam, mode)
    i_node = node_impurity(Y, Hv, lam, mode)
    # zero-reduction splits can look positive through rounding
    tol = 1e-12 * (1.0 + np.sum(Y**2) + lam * np.sum(Hv**2))
    if i_node <= tol:
        return None

    n_l = np.arange(1, n, dtype=float)[:, None]
    n_r = n - n_l
    lo, hi = min_samples_leaf - 1, n - min_samples_leaf  # admissible cut positions [lo, hi)
    scored = []  # per feature: (feature, sorted values, prefix-sum reductions or -inf)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        sums = [np.cumsum(v[order], axis=0) for v in (Z, Y, Y**2, Hv, Hv**2)]
        left = [s[:-1] for s in sums]
        right = [s[-1] - s[:-1] for s in sums]

        def impurity(parts, cnt):
            sz, sy, sy2, sh, sh2 = parts
            a = sz / cnt
            return np.sum(sy2 - 2 * a * sy + cnt * a**2 + lam * (sh2 - 2 * a * sh + cnt * a**2), axis=1)

        red = i_node - (n_l[:, 0] / n) * impurity(left, n_l) - (n_r[:, 0] / n) * impurity(right, n_r)
        admissible = np.zeros(n - 1, dtype=bool)
        admissible[lo:hi] = True
        admissible &= xs[:-1] < xs[1:]
        if admissible.any():
            scored.append((f, xs, np.where(admissible, red, -np.inf)))

    if not scored:
        return None
    # prefix sums carry rounding error: settle near-ties by direct recomputation
    top = max(float(red.max()) for _, _, red in scored)
    cutoff = top - 1e-9 * (abs(top) + tol)
    near = [(f, _midpoint(xs[i], xs[i + 1])) for f, xs, red in scored for i in np.flatnonzero(red >= cutoff)]
    best = None
    for f, thr in sorted(near):
        r = split_reduction(X, Y, Hv, lam, mode, f, thr)
        if best is None or r > best[0]:
            best = (r, f, thr)
    reduction, f, thr = best
    if not reduction > tol:
        return None
    return Split(int(f), float(thr), float(reduction))


# --------------------------------------------------------------------- trees


@dataclass(frozen=True)
class Tree:
    """Binary regression tree as parallel node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, states) -> np.ndarray:
        """Leaf index reached by each row of ``states``."""
        X = np.atleast_2d(states)
        idx = np.zeros(X.shape[0], dtype=int)
        for _ in range(self.depth):
            f = self.feature[idx]
            internal = f >= 0
            go_left = X[np.arange(len(idx)), np.maximum(f, 0)] <= self.threshold[idx]
            idx = np.where(internal, np.where(go_left, self.left[idx], self.right[idx]), idx)
        return idx

    def to_dict(self, node: int = 0) -> dict:
        out = {"value": self.value[node].tolist()}
        if self.feature[node] >= 0:
            out["feature"] = int(self.feature[node])
            out["threshold"] = float(self.threshold[node])
            out["left"] = self.to_dict(int(self.left[node]))
            out["right"] = self.to_dict(int(self.right[node]))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node: dict) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(np.nan)
            left.append(-1)
            right.append(-1)
            value.append([float(v) for v in node["value"]])
            if "feature" not in node:
                return i
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            left[i] = visit(node["left"])
            right[i] = visit(node["right"])
            return i

        visit(d)
        return cls(
            np.array(feature, dtype=int),
            np.array(threshold, dtype=float),
            np.array(left, dtype=int),
            np.array(right, dtype=int),
            np.array(value, dtype=float),
        )


def _grow_tree(X, Y, Hv, lam, mode, cfg: ForestConfig, rng: np.random.Generator, d: int) -> Tree:
    # only the first d state coordinates are split candidates
    n_sub = max(1, int(np.ceil(cfg.feature_fraction * d)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        value[node] = leaf_value(Y[idx], Hv[idx], lam, mode)
        if depth >= cfg.max_depth or len(idx) < 2 * cfg.min_samples_leaf:
            continue
        cand = np.arange(d) if n_sub >= d else np.sort(rng.choice(d, n_sub, replace=False))
        split = best_split(X[idx], Y[idx], Hv[idx], lam, mode, cand, cfg.min_samples_leaf)
        if split is None:
            continue
        go_left = X[idx, split.feature] <= split.threshold
        l, r = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = split.feature, split.threshold, l, r
        stack.append((r, idx[~go_left], depth + 1))
        stack.append((l, idx[go_left], depth + 1))

    return Tree(
        np.array(feature, dtype=int),
        np.array(threshold, dtype=float),
        np.array(left, dtype=int),
        np.array(right, dtype=int),
        np.array(value, dtype=float),
    )


# -------------------------------------------------------------------- forests


class ForestStack:
    """Evaluate a weighted set of smooth forests in one vectorized pass.

    All trees are concatenated and walked in lockstep; each forest's mean is
    clipped to its action bound before the weighted sum.
    """

    def __init__(self, forests: Sequence["SmoothForest"], weights: Sequence[float]):
        if not forests:
            raise ValueError("ForestStack needs at least one forest")
        layout = forests[0].layout
        if any(f.layout != layout for f in forests):
            raise ValueError("all forests must share a state layout")
        self.layout = layout
        feat, thr, lft, rgt, val, roots, lam_t, member = [], [], [], [], [], [], [], []
        offset, self.depth = 0, 0
        for m, forest in enumerate(forests):
            for tree in forest.trees:
                leaf = tree.feature < 0
                own = np.arange(tree.n_nodes) + offset
                feat.append(np.where(leaf, 0, tree.feature))
                thr.append(np.where(leaf, 0.0, tree.threshold))
                lft.append(np.where(leaf, own, tree.left + offset))
                rgt.append(np.where(leaf, own, tree.right + offset))
                val.append(tree.value)
                roots.append(offset)
                lam_t.append(forest.lam)
                member.append(m)
                offset += tree.n_nodes
                self.depth = max(self.depth, tree.depth)
        self.feature = np.concatenate(feat)
        self.threshold = np.concatenate(thr)
        self.left = np.concatenate(lft)
        self.right = np.concatenate(rgt)
        self.value = np.vstack(val)
        self.roots = np.array(roots)
        self.lam = np.array(lam_t, dtype=float)[None, :, None]
        self.member = np.array(member)
        counts = np.bincount(self.member)
        ends = np.cumsum(counts)
        self.spans = list(zip(ends - counts, ends))
        self.counts = counts[None, :, None].astype(float)
        tau = max(f.autoregressor.tau for f in forests)
        if tau > layout.q:
            raise ValueError(f"autoregressor needs {tau} past actions but states hold q={layout.q}")
        self.coeffs = np.zeros((len(forests), layout.k, tau))
        for m, forest in enumerate(forests):
            self.coeffs[m, :, : forest.autoregressor.tau] = forest.autoregressor.coeffs
        self.bounds = np.array([f.action_bound for f in forests], dtype=float)[None, :, None]
        self.weights = np.asarray(weights, dtype=float)

    def member_predictions(self, states) -> np.ndarray:
        """Per-forest predictions, shape (n, n_forests, k)."""
        X = np.atleast_2d(np.asarray(states, dtype=float))
        if X.shape[1] != self.layout.dim:
            raise ValueError(f"state dimension {X.shape[1]} != expected {self.layout.dim}")
        rows = np.arange(X.shape[0])[:, None]
        idx = np.broadcast_to(self.roots, (X.shape[0], len(self.roots)))
        for _ in range(self.depth):
            go_left = X[rows, self.feature[idx]] <= self.threshold[idx]
            idx = np.where(go_left, self.left[idx], self.right[idx])
        window = self.layout.action_window(X)[:, : self.coeffs.shape[2], :]
        h = np.einsum("nik,mki->nmk", window, self.coeffs)
        smoothed = (self.value[idx] + self.lam * h[:, self.member, :]) / (1 + self.lam)
        means = np.stack([smoothed[:, a:b].sum(axis=1) for a, b in self.spans], axis=1) / self.counts
        return np.clip(means, 0.0, self.bounds)

    def predict(self, states) -> np.ndarray:
        return np.einsum("nmk,m->nk", self.member_predictions(states), self.weights)


@dataclass(frozen=True, eq=False)
class SmoothForest:
    """One trained policy: regression trees plus the autoregressor they were smoothed toward."""

    trees: tuple[Tree, ...]
    lam: float
    autoregressor: LinearAutoregressor
    layout: StateLayout
    action_bound: float = 1.0
    leaf_mode: str = "distance_only"
    config: ForestConfig = ForestConfig()

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        _check_mode(self.leaf_mode)
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "_stack", None)

    def _get_stack(self) -> ForestStack:
        if self._stack is None:
            object.__setattr__(self, "_stack", ForestStack([self], [1.0]))
        return self._stack

    def predict(self, states) -> np.ndarray:
        """Predictions for a batch of states, shape (n, k), clipped to ``[0, action_bound]``."""
        return self._get_stack().predict(states)

    def h_values(self, states) -> np.ndarray:
        window = self.layout.action_window(np.atleast_2d(states))[:, : self.autoregressor.tau, :]
        return predict_ar(self.autoregressor, window)

    def to_dict(self) -> dict:
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "lambda": self.lam,
            "leaf_mode": self.leaf_mode,
            "action_bound": self.action_bound,
            "layout": self.layout.to_dict(),
            "autoregressor": self.autoregressor.to_dict(),
            "config": asdict(self.config),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothForest":
        if d.get("format") != FOREST_FORMAT or d.get("version") != FOREST_VERSION:
            raise ValueError(f"unsupported forest document: {d.get('format')} v{d.get('version')}")
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            lam=float(d["lambda"]),
            autoregressor=LinearAutoregressor.from_dict(d["autoregressor"]),
            layout=StateLayout(**d["layout"]),
            action_bound=float(d["action_bound"]),
            leaf_mode=d["leaf_mode"],
            config=ForestConfig(**d["config"]),
        )


def tree_seeds(seed: int, n_trees: int) -> list[np.random.Generator]:
    """Independent per-tree generators derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_trees)]


def train_forest(
    states,
    targets,
    h: LinearAutoregressor,
    lam: float,
    cfg: ForestConfig,
    layout: StateLayout,
    *,
    leaf_mode: str = "distance_only",
    action_bound: float = 1.0,
) -> SmoothForest:
    """Fit ``cfg.n_trees`` smooth regression trees on (state, feedback target) pairs.

    ``h(s)`` is computed once per sample from its recorded action window and
    held fixed while the trees grow.
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    Y = _as_rows(targets)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"{X.shape[0]} states but {Y.shape[0]} targets")
    if X.shape[1] != layout.dim or Y.shape[1] != layout.k:
        raise ValueError(
            f"data shapes {X.shape}, {Y.shape} do not match layout dim={layout.dim}, k={layout.k}"
        )
    if h.k != layout.k:
        raise ValueError("autoregressor and layout disagree on the action dimension")
    if h.tau > layout.q:
        raise ValueError(f"autoregressor needs {h.tau} past actions but states hold q={layout.q}")
    if X.shape[0] < cfg.min_samples_leaf:
        raise ValueError("fewer samples than min_samples_leaf")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    _check_mode(leaf_mode)

    Hv = predict_ar(h, layout.action_window(X)[:, : h.tau, :])
    n_split = layout.dim if cfg.split_on_actions else layout.n_context
    trees = []
    for rng in tree_seeds(cfg.seed, cfg.n_trees):
        if cfg.bootstrap:
            rows = rng.integers(0, X.shape[0], X.shape[0])
            trees.append(_grow_tree(X[rows], Y[rows], Hv[rows], lam, leaf_mode, cfg, rng, n_split))
        else:
            trees.append(_grow_tree(X, Y, Hv, lam, leaf_mode, cfg, rng, n_split))
    return SmoothForest(tuple(trees), float(lam), h, layout, float(action_bound), leaf_mode, cfg)


def forest_predict(forest: SmoothForest, state) -> np.ndarray:
    """Smoothed, clipped prediction of ``forest`` for one state, shape (k,)."""
    s = np.asarray(state, dtype=float)
    if s.ndim != 1:
        raise ValueError("forest_predict takes a single state vector")
    return forest.predict(s[None, :])[0]
