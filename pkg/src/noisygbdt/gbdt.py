"""Gradient-boosted decision trees with per-round hooks for noise handling.

The trainer exposes everything the noise detectors consume: per-round logits,
probabilities, predictions, and per-instance gradients are recorded into a
DynamicsLog, and an optional per-round callback may zero instance weights or
rewrite labels before that round's trees are fit. Split search is exact greedy
over sorted unique values for small data and histogram-based for large data,
behind the same interface.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .data_ingest import Dataset
from .dynamics import DynamicsLog, EpochRecord
from .metrics_report import RunReport, classification_metrics, prediction_type_counts

MODEL_FORMAT_VERSION = 1

# auto tree method switches to histograms above this many fitted rows
_HIST_THRESHOLD = 2048

_PROB_EPS = 1e-15


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoostConfig:
    max_depth: int = 6
    learning_rate: float = 0.3
    n_rounds: int = 100
    l2_reg: float = 1.0
    min_split_gain: float = 0.0
    objective: str = "auto"            # "softprob" | "logistic" | "auto"
    early_stop_min_delta: float = 0.5
    early_stop_patience: int = 10
    warmup_rounds: int = 15
    hessian_floor: float = 1e-16
    history_window: int = 5
    tree_method: str = "auto"          # "exact" | "hist" | "auto"
    max_bins: int = 256

    def validate(self, *, with_callback: bool = False) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be at least 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.hessian_floor <= 0:
            raise ValueError("hessian_floor must be positive")
        if self.objective not in ("auto", "softprob", "logistic"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.tree_method not in ("auto", "exact", "hist"):
            raise ValueError(f"unknown tree_method {self.tree_method!r}")
        if with_callback and self.warmup_rounds >= self.n_rounds:
            raise ValueError("warmup_rounds must be below n_rounds when a "
                             "correction callback is installed")


def resolve_objective(objective: str, class_count: int) -> str:
    if objective == "auto":
        return "logistic" if class_count == 2 else "softprob"
    if objective == "logistic" and class_count != 2:
        raise ValueError("logistic objective requires exactly 2 classes")
    return objective


# --------------------------------------------------------------------------
# objective math
# --------------------------------------------------------------------------

def probabilities(logits: np.ndarray, objective: str) -> np.ndarray:
    """Class probabilities from raw scores.

    softprob: row-wise softmax of (n, c) logits. logistic: sigmoid of (n,)
    logits expanded to columns [1-p, p].
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise ValueError("non-finite logit")
    if objective == "logistic":
        if logits.ndim != 1:
            raise ValueError("logistic expects one raw score per instance")
        p = 1.0 / (1.0 + np.exp(-logits))
        return np.stack([1.0 - p, p], axis=1)
    if logits.ndim != 2:
        raise ValueError("softprob expects (n, c) logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def grad_hess(probs: np.ndarray, labels: np.ndarray, objective: str,
              hessian_floor: float = 1e-16) -> tuple[np.ndarray, np.ndarray]:
    """Cross-entropy gradient and hessian against the given labels.

    softprob returns (n, c) arrays with g_k = p_k - [k == label] and
    h_k = max(floor, 2 p_k (1 - p_k)); logistic returns (n,) arrays with
    g = p - [label == 1] and h = max(floor, p (1 - p)).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if objective == "logistic":
        p = probs[:, 1] if probs.ndim == 2 else probs
        g = p - (labels == 1)
        h = np.maximum(hessian_floor, p * (1.0 - p))
        return g, h
    n = probs.shape[0]
    g = probs.copy()
    g[np.arange(n), labels] -= 1.0
    h = np.maximum(hessian_floor, 2.0 * probs * (1.0 - probs))
    return g, h


def split_gain(g_left: float, h_left: float, g_right: float, h_right: float,
               l2_reg: float) -> float:
    """Gain of splitting a node into (left, right) given summed grad/hess."""
    g_total = g_left + g_right
    h_total = h_left + h_right
    return 0.5 * (g_left * g_left / (h_left + l2_reg)
                  + g_right * g_right / (h_right + l2_reg)
                  - g_total * g_total / (h_total + l2_reg))


def leaf_value(g_sum: float, h_sum: float, l2_reg: float,
               learning_rate: float) -> float:
    return -learning_rate * g_sum / (h_sum + l2_reg)


# --------------------------------------------------------------------------
# trees
# --------------------------------------------------------------------------

@dataclass
class Tree:
    """Flat-array binary tree; leaves carry the boosted step already scaled by
    the learning rate. Routing predicate: feature value <= threshold goes left."""

    feature: np.ndarray     # int32, -1 marks a leaf
    threshold: np.ndarray   # float64
    left: np.ndarray        # int32 child indices
    right: np.ndarray
    value: np.ndarray       # float64 leaf values (0 on internal nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, features: np.ndarray) -> np.ndarray:
        node = np.zeros(features.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            f = feat[active]
            go_left = features[active, f] <= self.threshold[node[active]]
            node[active] = np.where(go_left, self.left[node[active]],
                                    self.right[node[active]])
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Tree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.int32),
            threshold=np.asarray(payload["threshold"], dtype=np.float64),
            left=np.asarray(payload["left"], dtype=np.int32),
            right=np.asarray(payload["right"], dtype=np.int32),
            value=np.asarray(payload["value"], dtype=np.float64),
        )


def _midpoint(lo: float, hi: float) -> float:
    """Midpoint threshold; guards float rounding so lo routes left and hi right
    under the <= predicate."""
    mid = 0.5 * (lo + hi)
    if mid >= hi:
        return lo
    return mid


class _ExactSplitter:
    """Exact greedy search over sorted unique feature values per node."""

    def __init__(self, features: np.ndarray, config: BoostConfig):
        self.x = features
        self.lam = config.l2_reg

    def best_split(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray,
                   g_total: float, h_total: float):
        lam = self.lam
        parent = g_total * g_total / (h_total + lam)
        best_gain = -np.inf
        best = None
        gr_ = g[rows]
        hr_ = h[rows]
        for j in range(self.x.shape[1]):
            xv = self.x[rows, j]
            order = np.argsort(xv, kind="stable")
            xs = xv[order]
            if xs[0] == xs[-1]:
                continue
            gl = np.cumsum(gr_[order])[:-1]
            hl = np.cumsum(hr_[order])[:-1]
            grh = g_total - gl
            hrh = h_total - hl
            gains = 0.5 * (gl * gl / (hl + lam) + grh * grh / (hrh + lam) - parent)
            gains[xs[:-1] == xs[1:]] = -np.inf
            k = int(np.argmax(gains))
            if gains[k] > best_gain:
                best_gain = float(gains[k])
                best = (j, _midpoint(float(xs[k]), float(xs[k + 1])))
        if best is None:
            return -np.inf, None, None
        return best_gain, best[0], best[1]

    def partition(self, rows: np.ndarray, feature: int, threshold: float):
        go_left = self.x[rows, feature] <= threshold
        return rows[go_left], rows[~go_left]


class Binner:
    """Per-feature quantile cut points and integer codes for histogram splits."""

    def __init__(self, features: np.ndarray, max_bins: int = 256,
                 fit_rows: np.ndarray | None = None):
        n, d = features.shape
        sample = features if fit_rows is None else features[fit_rows]
        self.cuts: list[np.ndarray] = []
        for j in range(d):
            uniq = np.unique(sample[:, j])
            if len(uniq) <= max_bins:
                cuts = np.array([_midpoint(float(a), float(b))
                                 for a, b in zip(uniq[:-1], uniq[1:])])
            else:
                qs = np.quantile(sample[:, j],
                                 np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
                cuts = np.unique(qs)
                cuts = cuts[cuts < uniq[-1]]
            self.cuts.append(cuts)
        self.stride = max((len(c) for c in self.cuts), default=0) + 1
        codes = np.empty((n, d), dtype=np.int32)
        for j in range(d):
            codes[:, j] = np.searchsorted(self.cuts[j], features[:, j],
                                          side="left")
        self.codes = codes
        self.offsets = (np.arange(d) * self.stride).astype(np.int32)
        # cut validity mask: candidate bin b exists only when feature j has a cut b
        self.valid = np.zeros((d, self.stride - 1), dtype=bool) if self.stride > 1 \
            else np.zeros((d, 0), dtype=bool)
        for j in range(d):
            self.valid[j, :len(self.cuts[j])] = True


class _HistSplitter:
    """Histogram-based split search on pre-binned features."""

    def __init__(self, binner: Binner, config: BoostConfig):
        self.b = binner
        self.lam = config.l2_reg

    def node_hists(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray):
        b = self.b
        d = b.codes.shape[1]
        flat = (b.codes[rows] + b.offsets).ravel()
        total = d * b.stride
        gh = np.bincount(flat, weights=np.repeat(g[rows], d), minlength=total)
        hh = np.bincount(flat, weights=np.repeat(h[rows], d), minlength=total)
        return gh.reshape(d, b.stride), hh.reshape(d, b.stride)

    def best_split(self, hists, g_total: float, h_total: float):
        gh, hh = hists
        if self.b.stride < 2:
            return -np.inf, None, None
        lam = self.lam
        gl = np.cumsum(gh, axis=1)[:, :-1]
        hl = np.cumsum(hh, axis=1)[:, :-1]
        grh = g_total - gl
        hrh = h_total - hl
        parent = g_total * g_total / (h_total + lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = 0.5 * (gl * gl / (hl + lam) + grh * grh / (hrh + lam) - parent)
        gains[~self.b.valid] = -np.inf
        gains[~np.isfinite(gains)] = -np.inf
        k = int(np.argmax(gains))
        j, bin_idx = divmod(k, gains.shape[1])
        gain = float(gains[j, bin_idx])
        if not np.isfinite(gain):
            return -np.inf, None, None
        return gain, j, bin_idx

    def partition(self, rows: np.ndarray, feature: int, bin_idx: int):
        go_left = self.b.codes[rows, feature] <= bin_idx
        return rows[go_left], rows[~go_left]

    def threshold_value(self, feature: int, bin_idx: int) -> float:
        return float(self.b.cuts[feature][bin_idx])


class _TreeGrower:
    def __init__(self, config: BoostConfig):
        self.cfg = config
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _make_leaf(self, idx: int, g_total: float, h_total: float) -> None:
        self.value[idx] = leaf_value(g_total, h_total, self.cfg.l2_reg,
                                     self.cfg.learning_rate)

    def grow_exact(self, splitter: _ExactSplitter, rows: np.ndarray,
                   g: np.ndarray, h: np.ndarray, depth: int) -> int:
        idx = self._new_node()
        g_total = float(g[rows].sum())
        h_total = float(h[rows].sum())
        if depth >= self.cfg.max_depth or len(rows) < 2:
            self._make_leaf(idx, g_total, h_total)
            return idx
        gain, feat, thr = splitter.best_split(rows, g, h, g_total, h_total)
        if feat is None or gain <= self.cfg.min_split_gain:
            self._make_leaf(idx, g_total, h_total)
            return idx
        left_rows, right_rows = splitter.partition(rows, feat, thr)
        self.feature[idx] = feat
        self.threshold[idx] = thr
        self.left[idx] = self.grow_exact(splitter, left_rows, g, h, depth + 1)
        self.right[idx] = self.grow_exact(splitter, right_rows, g, h, depth + 1)
        return idx

    def grow_hist(self, splitter: _HistSplitter, rows: np.ndarray,
                  g: np.ndarray, h: np.ndarray, depth: int, hists=None) -> int:
        idx = self._new_node()
        if hists is None:
            hists = splitter.node_hists(rows, g, h)
        gh, hh = hists
        # every feature histogram sums all node rows, so row 0 carries the totals
        g_total = float(gh[0].sum())
        h_total = float(hh[0].sum())
        if depth >= self.cfg.max_depth or len(rows) < 2:
            self._make_leaf(idx, g_total, h_total)
            return idx
        gain, feat, bin_idx = splitter.best_split(hists, g_total, h_total)
        if feat is None or gain <= self.cfg.min_split_gain:
            self._make_leaf(idx, g_total, h_total)
            return idx
        left_rows, right_rows = splitter.partition(rows, feat, bin_idx)
        self.feature[idx] = feat
        self.threshold[idx] = splitter.threshold_value(feat, bin_idx)
        # compute the smaller child's histograms; derive the sibling by subtraction
        if len(left_rows) <= len(right_rows):
            left_hists = splitter.node_hists(left_rows, g, h)
            right_hists = (gh - left_hists[0], hh - left_hists[1])
        else:
            right_hists = splitter.node_hists(right_rows, g, h)
            left_hists = (gh - right_hists[0], hh - right_hists[1])
        self.left[idx] = self.grow_hist(splitter, left_rows, g, h, depth + 1,
                                        left_hists)
        self.right[idx] = self.grow_hist(splitter, right_rows, g, h, depth + 1,
                                         right_hists)
        return idx

    def freeze(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
        )


def _resolve_method(method: str, n_rows: int) -> str:
    if method == "auto":
        return "hist" if n_rows > _HIST_THRESHOLD else "exact"
    return method


def _fit_tree(features: np.ndarray, g: np.ndarray, h: np.ndarray,
              rows: np.ndarray, config: BoostConfig,
              binner: Binner | None) -> Tree:
    grower = _TreeGrower(config)
    if binner is not None:
        grower.grow_hist(_HistSplitter(binner, config), rows, g, h, 0)
    else:
        grower.grow_exact(_ExactSplitter(features, config), rows, g, h, 0)
    return grower.freeze()


def build_tree(features: np.ndarray, gradients: np.ndarray,
               hessians: np.ndarray, weights: np.ndarray,
               config: BoostConfig) -> Tree:
    """Fit one regression tree to (gradient, hessian) targets.

    Zero-weight instances are excluded from the split search and leaf fitting
    entirely, so the result is identical to physically deleting them.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    rows = np.flatnonzero(weights > 0)
    if rows.size == 0:
        raise ValueError("all instance weights are zero")
    g = np.asarray(gradients, dtype=np.float64) * weights
    h = np.asarray(hessians, dtype=np.float64) * weights
    method = _resolve_method(config.tree_method, rows.size)
    binner = Binner(features, config.max_bins, fit_rows=rows) \
        if method == "hist" else None
    return _fit_tree(features, g, h, rows, config, binner)


# --------------------------------------------------------------------------
# ensemble
# --------------------------------------------------------------------------

@dataclass
class Ensemble:
    objective: str            # resolved: "softprob" | "logistic"
    class_count: int
    feature_count: int
    base_score: float = 0.0
    rounds: list = field(default_factory=list)   # per round: list[Tree]

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def raw_scores(self, features: np.ndarray) -> np.ndarray:
        """(n,) raw score for logistic, (n, c) for softprob."""
        if features.shape[1] != self.feature_count:
            raise ValueError(
                f"feature width {features.shape[1]} does not match the "
                f"trained width {self.feature_count}")
        n = features.shape[0]
        if self.objective == "logistic":
            out = np.full(n, self.base_score)
            for trees in self.rounds:
                out += trees[0].predict(features)
            return out
        out = np.full((n, self.class_count), self.base_score)
        for trees in self.rounds:
            for k, tree in enumerate(trees):
                out[:, k] += tree.predict(features)
        return out

    def predict(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-class logits (n, c) and probabilities (n, c)."""
        raw = self.raw_scores(features)
        probs = probabilities(raw, self.objective)
        return expand_logits(raw, self.objective), probs

    def predict_class(self, features: np.ndarray) -> np.ndarray:
        _, probs = self.predict(features)
        return probs.argmax(axis=1)

    def truncated(self, n_rounds: int) -> "Ensemble":
        return Ensemble(objective=self.objective, class_count=self.class_count,
                        feature_count=self.feature_count,
                        base_score=self.base_score,
                        rounds=self.rounds[:n_rounds])

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "objective": self.objective,
            "class_count": self.class_count,
            "feature_count": self.feature_count,
            "base_score": self.base_score,
            "rounds": [[t.to_dict() for t in trees] for trees in self.rounds],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Ensemble":
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError("unsupported model format version")
        return cls(
            objective=payload["objective"],
            class_count=int(payload["class_count"]),
            feature_count=int(payload["feature_count"]),
            base_score=float(payload["base_score"]),
            rounds=[[Tree.from_dict(t) for t in trees]
                    for trees in payload["rounds"]],
        )


def expand_logits(raw: np.ndarray, objective: str) -> np.ndarray:
    """Uniform (n, c) logit view: logistic raw scores become [0, z] rows."""
    if objective == "logistic":
        return np.stack([np.zeros_like(raw), raw], axis=1)
    return raw


def predict(ensemble: Ensemble, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Module-level prediction: (logits (n, c), probabilities (n, c))."""
    return ensemble.predict(features)


def save_model(ensemble: Ensemble, path) -> None:
    with open(path, "w") as fh:
        json.dump(ensemble.to_dict(), fh)


def load_model(path) -> Ensemble:
    with open(path) as fh:
        return Ensemble.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# early stopping
# --------------------------------------------------------------------------

class EarlyStopper:
    """Stop when the monitored loss fails to improve on the previous round by
    at least ``min_delta`` for ``patience`` consecutive rounds. The best round
    is the last one that made a full-delta improvement; the first round is the
    baseline."""

    def __init__(self, min_delta: float, patience: int):
        self.min_delta = min_delta
        self.patience = patience
        self.prev_loss: float | None = None
        self.best_round = 0
        self.strikes = 0

    def update(self, round_index: int, loss: float) -> bool:
        """Feed one monitored loss; returns True when training should stop."""
        if self.prev_loss is None or self.prev_loss - loss >= self.min_delta:
            self.best_round = round_index
            self.strikes = 0
        else:
            self.strikes += 1
        self.prev_loss = loss
        return self.strikes >= self.patience


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

@dataclass
class RoundAction:
    """What a correction callback did in one round: per-method flags/scores for
    reporting plus whether labels or weights changed."""

    flags: dict = field(default_factory=dict)    # method -> bool (n,)
    scores: dict = field(default_factory=dict)   # method -> float (n,)
    labels_changed: bool = False
    weights_changed: bool = False
    events: list = field(default_factory=list)


@dataclass
class TrainResult:
    ensemble: Ensemble
    dynamics: DynamicsLog
    report: RunReport


def _logloss_terms(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = probs[np.arange(len(labels)), labels]
    return -np.log(np.clip(p, _PROB_EPS, 1.0))


def _weighted_mean_logloss(probs, labels, weights) -> float:
    terms = _logloss_terms(probs, labels)
    total = weights.sum()
    if total == 0:
        return 0.0
    return float((terms * weights).sum() / total)


def _summed_logloss(probs, labels) -> float:
    return float(_logloss_terms(probs, labels).sum())


def _weighted_accuracy(predicted, labels, weights) -> float:
    total = weights.sum()
    if total == 0:
        return 0.0
    return float(((predicted == labels) * weights).sum() / total)


def _detection_counts(flags: np.ndarray, mask: np.ndarray) -> dict:
    flags = np.asarray(flags, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    agree = flags == mask
    tp = int((flags & mask).sum())
    fp = int((flags & ~mask).sum())
    fn = int((~flags & mask).sum())
    return {
        "accuracy": float(agree.mean()),
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
        "flagged_count": int(flags.sum()),
        "flagged_noisy_count": tp,
        "flagged_fraction": float(flags.mean()),
    }


class _RoundCsvLogger:
    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["round", "train_logloss", "monitor_logloss",
                               "train_accuracy", "test_accuracy"])

    def log(self, t, train_logloss, monitor_logloss, train_accuracy,
            test_accuracy):
        self._writer.writerow([
            t, repr(train_logloss),
            "" if monitor_logloss is None else repr(monitor_logloss),
            repr(train_accuracy),
            "" if test_accuracy is None else repr(test_accuracy)])
        self._fh.flush()

    def close(self):
        self._fh.close()


def train(dataset: Dataset, config: BoostConfig, callback=None, *,
          test: Dataset | None = None, monitor=None,
          initial_weights: np.ndarray | None = None,
          metrics_csv=None) -> TrainResult:
    """Boost for up to ``config.n_rounds`` rounds.

    Per round: compute probabilities and gradients against the current labels
    and weights, invoke the correction callback once the warm-up has passed
    (it may zero weights or rewrite labels, taking effect in this round's tree
    fit), fit one tree per class, then record the post-update state in the
    DynamicsLog and evaluate the round.

    ``monitor`` selects early stopping: None disables it, "test" monitors the
    summed log-loss on the clean test set, and an (features, labels) pair
    monitors a held-out set. The returned ensemble is truncated to the best
    monitored round.
    """
    config.validate(with_callback=callback is not None)
    n = len(dataset)
    c = dataset.class_count
    objective = resolve_objective(config.objective, c)
    features = dataset.features
    if not np.isfinite(features).all():
        raise ValueError("features must be finite")

    labels = dataset.noisy_labels.astype(np.int64).copy()
    weights = (np.ones(n) if initial_weights is None
               else np.asarray(initial_weights, dtype=np.float64).copy())
    if weights.shape != (n,):
        raise ValueError("initial_weights must have one entry per instance")

    if monitor == "test":
        if test is None:
            raise ValueError('monitor="test" requires a test dataset')
        monitor_data = (test.features, test.clean_labels)
    else:
        monitor_data = monitor
    stopper = (EarlyStopper(config.early_stop_min_delta,
                            config.early_stop_patience)
               if monitor_data is not None else None)

    method = _resolve_method(config.tree_method, int((weights > 0).sum()))
    binner = (Binner(features, config.max_bins,
                     fit_rows=np.flatnonzero(weights > 0))
              if method == "hist" else None)

    ensemble = Ensemble(objective=objective, class_count=c,
                        feature_count=features.shape[1])
    if objective == "logistic":
        raw = np.full(n, ensemble.base_score)
        raw_test = np.full(len(test), ensemble.base_score) if test is not None else None
        raw_mon = (np.full(len(monitor_data[1]), ensemble.base_score)
                   if monitor_data is not None else None)
    else:
        raw = np.full((n, c), ensemble.base_score)
        raw_test = (np.full((len(test), c), ensemble.base_score)
                    if test is not None else None)
        raw_mon = (np.full((len(monitor_data[1]), c), ensemble.base_score)
                   if monitor_data is not None else None)

    dyn = DynamicsLog(n, c, config.history_window)
    series = {k: [] for k in ("train_logloss", "monitor_logloss",
                              "test_logloss", "train_accuracy",
                              "test_accuracy")}
    pred_types = {"true_match": [], "noisy_match": [], "other": []}
    has_noise = bool(dataset.noise_mask.any())
    detector_series: dict[str, dict] = {}
    all_events: list[dict] = []
    logger = _RoundCsvLogger(metrics_csv) if metrics_csv else None
    first_detection_round = None
    stopped_early = False
    rounds_trained = 0

    try:
        for t in range(config.n_rounds):
            probs = probabilities(raw, objective)
            g, h = grad_hess(probs, labels, objective, config.hessian_floor)

            if callback is not None and t >= config.warmup_rounds:
                if first_detection_round is None:
                    first_detection_round = t
                action = callback(t, dyn, labels, weights, dataset.instance_ids)
                if action is not None:
                    for m, fl in action.flags.items():
                        entry = detector_series.setdefault(
                            m, {"round": [], "accuracy": [], "precision": [],
                                "recall": [], "flagged_fraction": [],
                                "flagged_count": [], "flagged_noisy_count": []})
                        counts = _detection_counts(fl, dataset.noise_mask)
                        entry["round"].append(t)
                        for key in ("accuracy", "precision", "recall",
                                    "flagged_fraction", "flagged_count",
                                    "flagged_noisy_count"):
                            entry[key].append(counts[key])
                    all_events.extend(action.events)
                    if action.labels_changed:
                        g, h = grad_hess(probs, labels, objective,
                                         config.hessian_floor)

            rows = np.flatnonzero(weights > 0)
            if rows.size == 0:
                raise TrainingDivergedError("every instance weight is zero")
            trees = []
            if objective == "logistic":
                gw = g * weights
                hw = h * weights
                tree = _fit_tree(features, gw, hw, rows, config, binner)
                trees.append(tree)
                raw += tree.predict(features)
                if raw_test is not None:
                    raw_test += tree.predict(test.features)
                if raw_mon is not None:
                    raw_mon += tree.predict(monitor_data[0])
            else:
                for k in range(c):
                    gw = g[:, k] * weights
                    hw = h[:, k] * weights
                    tree = _fit_tree(features, gw, hw, rows, config, binner)
                    trees.append(tree)
                    raw[:, k] += tree.predict(features)
                    if raw_test is not None:
                        raw_test[:, k] += tree.predict(test.features)
                    if raw_mon is not None:
                        raw_mon[:, k] += tree.predict(monitor_data[0])
            ensemble.rounds.append(trees)
            rounds_trained = t + 1

            post_probs = probabilities(raw, objective)
            post_g, _ = grad_hess(post_probs, labels, objective,
                                  config.hessian_floor)
            max_abs_g = (np.abs(post_g) if post_g.ndim == 1
                         else np.abs(post_g).max(axis=1))
            predicted = post_probs.argmax(axis=1)
            dyn.record(EpochRecord(round=t,
                                   logits=(expand_logits(raw, objective)
                                           if objective == "logistic"
                                           else raw.copy()),
                                   probs=post_probs,
                                   predicted=predicted,
                                   max_abs_gradient=max_abs_g),
                       labels)

            train_loss = _weighted_mean_logloss(post_probs, labels, weights)
            if not np.isfinite(train_loss):
                raise TrainingDivergedError(
                    f"round {t}: training loss became non-finite")
            train_acc = _weighted_accuracy(predicted, labels, weights)
            series["train_logloss"].append(train_loss)
            series["train_accuracy"].append(train_acc)

            test_loss = test_acc = None
            if test is not None:
                test_probs = probabilities(raw_test, objective)
                test_pred = test_probs.argmax(axis=1)
                test_loss = float(_logloss_terms(test_probs,
                                                 test.clean_labels).mean())
                test_acc = float((test_pred == test.clean_labels).mean())
                series["test_logloss"].append(test_loss)
                series["test_accuracy"].append(test_acc)

            monitor_loss = None
            if monitor_data is not None:
                mon_probs = probabilities(raw_mon, objective)
                monitor_loss = _summed_logloss(mon_probs, monitor_data[1])
                if not np.isfinite(monitor_loss):
                    raise TrainingDivergedError(
                        f"round {t}: monitored loss became non-finite")
                series["monitor_logloss"].append(monitor_loss)

            if has_noise:
                counts = prediction_type_counts(predicted,
                                                dataset.clean_labels,
                                                dataset.noisy_labels)
                for key, val in counts.items():
                    pred_types[key].append(val)

            if logger is not None:
                logger.log(t, train_loss, monitor_loss, train_acc, test_acc)

            if stopper is not None and stopper.update(t, monitor_loss):
                stopped_early = True
                break
    finally:
        if logger is not None:
            logger.close()

    best_round = stopper.best_round if stopper is not None else rounds_trained - 1
    final_ensemble = ensemble.truncated(best_round + 1)

    report = RunReport(
        seed=0,
        config=asdict(config) | {"objective_resolved": objective,
                                 "tree_method_resolved": method},
        rounds_trained=rounds_trained,
        best_round=best_round,
        stopped_early=stopped_early,
        empirical_noise_rate=float(dataset.noise_mask.mean()) if n else 0.0,
        series={k: v for k, v in series.items() if v},
        prediction_types=pred_types if has_noise else
        {k: [] for k in pred_types},
        detector_series=detector_series,
        correction_events=all_events,
    )

    if test is not None:
        final_pred = final_ensemble.predict_class(test.features)
        report.final = classification_metrics(final_pred, test.clean_labels,
                                              c).as_dict()

    if detector_series:
        evaluation = {}
        for point, round_idx in (
                ("first_after_warmup", first_detection_round),
                ("early_stop", max(best_round, first_detection_round or 0))):
            methods = {}
            for m, entry in detector_series.items():
                if round_idx in entry["round"]:
                    i = entry["round"].index(round_idx)
                elif entry["round"]:
                    # early stop can precede or outlive the detection rounds
                    later = [r for r in entry["round"] if r >= round_idx]
                    target = min(later) if later else entry["round"][-1]
                    i = entry["round"].index(target)
                else:
                    continue
                methods[m] = {key: entry[key][i]
                              for key in ("accuracy", "precision", "recall",
                                          "flagged_fraction")}
                methods[m]["round"] = entry["round"][i]
            evaluation[point] = {"round": round_idx, "methods": methods}
        report.evaluation = evaluation

    return TrainResult(ensemble=final_ensemble, dynamics=dyn, report=report)
