"""Per-instance noise scoring and thresholding.

Four detectors produce one score per training instance from the recorded
training dynamics:

* likelihood-ratio: probability of the assigned label over the probability of
  the predicted class, from the latest round (low scores are suspicious);
* margin average: assigned-label logit minus the best other-class logit,
  averaged over the retained window (negative means suspicious);
* confidence/correctness: mean label probability and fraction of rounds
  predicted as the label, combined into one score over the whole run;
* gradient magnitude: the largest absolute per-instance gradient over the
  window (large is suspicious).

Scores become noisy/clean flags through a fixed cut, a two-component Gaussian
mixture, or a top-quantile rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsLog

LOW_IS_NOISY = "low_is_noisy"
HIGH_IS_NOISY = "high_is_noisy"

METHOD_LRT = "lrt"
METHOD_AUM = "aum"
METHOD_CONFCORR = "confcorr"
METHOD_GRADIENTS = "gradients"
ALL_METHODS = (METHOD_LRT, METHOD_AUM, METHOD_CONFCORR, METHOD_GRADIENTS)

# confidence/correctness and gradient-magnitude scores live on probability
# scales, so an absolute minimum separation between the mixture components is
# meaningful: a perfectly fitted, consistently labeled problem compresses all
# scores into a sliver and the mixture split inside it carries no noise
# evidence
MIN_COMPONENT_GAP = 0.05

DEFAULT_LRT_EPSILON = 1.0
DEFAULT_AUM_THRESHOLD = 0.0


@dataclass(frozen=True)
class NoiseScore:
    """Single-instance view of a detector output."""

    instance_id: int
    method: str
    score: float
    flagged_noisy: bool
    threshold_used: float
    polarity: str


@dataclass
class NoiseScores:
    """Columnar detector output for a whole training set."""

    method: str
    instance_ids: np.ndarray
    scores: np.ndarray
    polarity: str
    flagged: np.ndarray
    threshold_used: float
    note: str = ""

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, i: int) -> NoiseScore:
        return NoiseScore(instance_id=int(self.instance_ids[i]),
                          method=self.method,
                          score=float(self.scores[i]),
                          flagged_noisy=bool(self.flagged[i]),
                          threshold_used=self.threshold_used,
                          polarity=self.polarity)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def noisiness(self) -> np.ndarray:
        """Scores oriented so that larger always means more suspicious."""
        return -self.scores if self.polarity == LOW_IS_NOISY else self.scores


@dataclass
class ConfCorrStats:
    confidence: np.ndarray    # mean label probability, in [0, 1]
    variability: np.ndarray   # population std of the label probabilities
    correctness: np.ndarray   # fraction of rounds predicted as the label


@dataclass
class DetectionMetrics:
    accuracy: float
    precision: float
    recall: float


# --------------------------------------------------------------------------
# threshold policies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPolicy:
    value: float


@dataclass(frozen=True)
class GmmPolicy:
    pass


@dataclass(frozen=True)
class QuantilePolicy:
    q: float

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0):
            raise ValueError("quantile must lie in [0, 1]")


def parse_policy(spec):
    """Accept a policy object or a string like "gmm", "fixed:0.5", "quantile:0.9"."""
    if isinstance(spec, (FixedPolicy, GmmPolicy, QuantilePolicy)):
        return spec
    if spec == "gmm":
        return GmmPolicy()
    if isinstance(spec, str) and ":" in spec:
        kind, _, arg = spec.partition(":")
        if kind == "fixed":
            return FixedPolicy(float(arg))
        if kind == "quantile":
            return QuantilePolicy(float(arg))
    raise ValueError(f"unknown threshold policy {spec!r}")


# --------------------------------------------------------------------------
# two-component 1-D Gaussian mixture
# --------------------------------------------------------------------------

@dataclass
class Gmm1D:
    """Two-component mixture; components are ordered by mean ascending."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    log_likelihoods: list = field(default_factory=list)

    def posterior_upper(self, x: np.ndarray) -> np.ndarray:
        """Posterior probability of the higher-mean component."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        log_p = (-0.5 * np.log(2.0 * np.pi * self.variances)
                 - (x[:, None] - self.means) ** 2 / (2.0 * self.variances)
                 + np.log(self.weights))
        m = log_p.max(axis=1, keepdims=True)
        norm = m + np.log(np.exp(log_p - m).sum(axis=1, keepdims=True))
        return np.exp(log_p[:, 1:2] - norm).ravel()


def fit_gmm_1d(values: np.ndarray, max_iter: int = 200,
               tol: float = 1e-6) -> Gmm1D:
    """EM fit of a two-component Gaussian mixture to 1-D data.

    Initialization places the component means at the 25th and 75th percentiles
    with a shared variance and equal weights; variances are floored at
    1e-9 times the squared data range.
    """
    x = np.asarray(values, dtype=np.float64)
    if len(np.unique(x)) < 2:
        raise ValueError("need at least 2 distinct values to fit a mixture")
    span = float(x.max() - x.min())
    var_floor = 1e-9 * span * span
    mu = np.array([np.percentile(x, 25.0), np.percentile(x, 75.0)])
    var = np.full(2, max(float(x.var()), var_floor))
    w = np.array([0.5, 0.5])
    lls: list[float] = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_p = (-0.5 * np.log(2.0 * np.pi * var)
                 - (x[:, None] - mu) ** 2 / (2.0 * var)
                 + np.log(w))
        m = log_p.max(axis=1, keepdims=True)
        log_norm = m + np.log(np.exp(log_p - m).sum(axis=1, keepdims=True))
        ll = float(log_norm.sum())
        lls.append(ll)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll
        resp = np.exp(log_p - log_norm)
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk
        var = np.maximum(var, var_floor)
        w = nk / len(x)
    order = np.argsort(mu, kind="stable")
    return Gmm1D(means=mu[order], variances=var[order], weights=w[order],
                 log_likelihoods=lls)


def gmm_decision_threshold(gmm: Gmm1D) -> float:
    """Score value where the posterior of the higher-mean component crosses
    one half, located between (or bracketing outward from) the two means."""
    lo, hi = float(gmm.means[0]), float(gmm.means[1])
    if hi <= lo:
        return lo

    def upper_minus_half(x: float) -> float:
        return float(gmm.posterior_upper(np.array([x]))[0]) - 0.5

    span = hi - lo
    a, b = lo, hi
    for _ in range(64):  # expand the bracket when a heavy component engulfs a mean
        if upper_minus_half(a) <= 0.0:
            break
        a -= span
    for _ in range(64):
        if upper_minus_half(b) >= 0.0:
            break
        b += span
    if upper_minus_half(a) > 0.0:
        return -math.inf
    if upper_minus_half(b) < 0.0:
        return math.inf
    for _ in range(100):
        mid = 0.5 * (a + b)
        if upper_minus_half(mid) >= 0.0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


def _flag_none(scores: np.ndarray, polarity: str,
               note: str) -> tuple[np.ndarray, float, str]:
    cut = -np.inf if polarity == LOW_IS_NOISY else np.inf
    return np.zeros(len(scores), dtype=bool), cut, note


def _gmm_flags(scores: np.ndarray, polarity: str, *,
               min_gap: float = 0.0) -> tuple[np.ndarray, float, str]:
    """Mixture-based flags: the component on the suspicious side is treated as
    the noise population. With ``min_gap`` > 0, nothing is flagged when the
    fitted component means sit closer than the gap (no separable noise
    population)."""
    if len(np.unique(scores)) < 2:
        warnings.warn("mixture thresholding degenerate: fewer than 2 distinct "
                      "scores; flagging nothing")
        return _flag_none(scores, polarity, "degenerate: identical scores")
    gmm = fit_gmm_1d(scores)
    if gmm.means[1] - gmm.means[0] < min_gap:
        return _flag_none(scores, polarity,
                          "mixture components indistinguishable; not flagged")
    cut = gmm_decision_threshold(gmm)
    if polarity == LOW_IS_NOISY:
        return scores < cut, cut, ""
    return scores > cut, cut, ""


def threshold(scores: NoiseScores, policy) -> np.ndarray:
    """Re-flag a score set under a policy; returns the boolean flag vector.

    fixed(v) compares against v respecting polarity; gmm assigns by mixture
    posterior; quantile(q) flags exactly the most-suspicious (1-q) fraction,
    breaking score ties by instance id.
    """
    policy = parse_policy(policy)
    s = scores.scores
    if len(s) == 0:
        raise ValueError("empty score set")
    if isinstance(policy, FixedPolicy):
        if scores.polarity == LOW_IS_NOISY:
            return s < policy.value
        return s > policy.value
    if isinstance(policy, GmmPolicy):
        flags, _, _ = _gmm_flags(s, scores.polarity)
        return flags
    k = int(round((1.0 - policy.q) * len(s)))
    flags = np.zeros(len(s), dtype=bool)
    if k <= 0:
        return flags
    order = np.lexsort((scores.instance_ids, scores.noisiness() * -1.0))
    flags[order[:k]] = True
    return flags


# --------------------------------------------------------------------------
# detectors
# --------------------------------------------------------------------------

def lrt_scores(probs: np.ndarray, labels: np.ndarray,
               instance_ids: np.ndarray,
               epsilon: float = DEFAULT_LRT_EPSILON) -> NoiseScores:
    """Likelihood ratio p(label | x) / p(predicted | x) from the latest round;
    flagged when the ratio falls below ``epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.shape[0]
    p_label = probs[np.arange(n), labels]
    p_pred = probs.max(axis=1)
    ratio = p_label / p_pred
    return NoiseScores(method=METHOD_LRT,
                       instance_ids=np.asarray(instance_ids),
                       scores=ratio, polarity=LOW_IS_NOISY,
                       flagged=ratio < epsilon, threshold_used=float(epsilon))


def aum_scores(window_logits: np.ndarray, labels: np.ndarray,
               instance_ids: np.ndarray,
               cut: float = DEFAULT_AUM_THRESHOLD) -> NoiseScores:
    """Mean margin (assigned-label logit minus best other-class logit) over
    the retained window; negative means suspicious."""
    window_logits = np.asarray(window_logits, dtype=np.float64)
    if window_logits.ndim != 3 or window_logits.shape[0] == 0:
        raise ValueError("expected a non-empty (rounds, instances, classes) window")
    w, n, c = window_logits.shape
    if c < 2:
        raise ValueError("margins need at least 2 classes")
    idx = np.arange(n)
    z_label = window_logits[:, idx, labels]
    masked = window_logits.copy()
    masked[:, idx, labels] = -np.inf
    z_other = masked.max(axis=2)
    margins = z_label - z_other
    score = margins.mean(axis=0)
    return NoiseScores(method=METHOD_AUM,
                       instance_ids=np.asarray(instance_ids),
                       scores=score, polarity=LOW_IS_NOISY,
                       flagged=score < cut, threshold_used=float(cut))


def confcorr_scores(log: DynamicsLog,
                    instance_ids: np.ndarray) -> tuple[ConfCorrStats, NoiseScores]:
    """Confidence / variability / correctness over all recorded rounds, with a
    combined score (confidence + correctness) / 2 thresholded by mixture fit."""
    stats = ConfCorrStats(confidence=log.confidence(),
                          variability=log.variability(),
                          correctness=log.correctness())
    combined = 0.5 * (stats.confidence + stats.correctness)
    flags, cut, note = _gmm_flags(combined, LOW_IS_NOISY,
                                  min_gap=MIN_COMPONENT_GAP)
    return stats, NoiseScores(method=METHOD_CONFCORR,
                              instance_ids=np.asarray(instance_ids),
                              scores=combined, polarity=LOW_IS_NOISY,
                              flagged=flags, threshold_used=cut, note=note)


def gradient_scores(window_gradients: np.ndarray,
                    instance_ids: np.ndarray) -> NoiseScores:
    """Largest absolute per-instance gradient over the retained window,
    thresholded by mixture fit (higher-mean component is the noise cluster)."""
    window_gradients = np.asarray(window_gradients, dtype=np.float64)
    if window_gradients.ndim != 2 or window_gradients.shape[0] == 0:
        raise ValueError("expected a non-empty (rounds, instances) window")
    score = window_gradients.max(axis=0)
    flags, cut, note = _gmm_flags(score, HIGH_IS_NOISY,
                                  min_gap=MIN_COMPONENT_GAP)
    return NoiseScores(method=METHOD_GRADIENTS,
                       instance_ids=np.asarray(instance_ids),
                       scores=score, polarity=HIGH_IS_NOISY,
                       flagged=flags, threshold_used=cut, note=note)


def score_all(log: DynamicsLog, labels: np.ndarray,
              instance_ids: np.ndarray,
              methods=ALL_METHODS) -> dict[str, NoiseScores]:
    """Run the requested detectors against one dynamics log."""
    out: dict[str, NoiseScores] = {}
    for method in methods:
        if method == METHOD_LRT:
            out[method] = lrt_scores(log.latest().probs, labels, instance_ids)
        elif method == METHOD_AUM:
            out[method] = aum_scores(log.window_logits(), labels, instance_ids)
        elif method == METHOD_CONFCORR:
            _, out[method] = confcorr_scores(log, instance_ids)
        elif method == METHOD_GRADIENTS:
            out[method] = gradient_scores(log.window_max_abs_gradients(),
                                          instance_ids)
        else:
            raise ValueError(f"unknown detector {method!r}")
    return out


# --------------------------------------------------------------------------
# evaluation helpers
# --------------------------------------------------------------------------

def detection_metrics(flags: np.ndarray, noise_mask: np.ndarray) -> DetectionMetrics:
    """Accuracy of the noisy/clean flags against the ground-truth mask;
    precision and recall treat "noisy" as the positive class."""
    flags = np.asarray(flags, dtype=bool)
    mask = np.asarray(noise_mask, dtype=bool)
    if flags.shape != mask.shape:
        raise ValueError("flags and mask must have equal length")
    tp = int((flags & mask).sum())
    fp = int((flags & ~mask).sum())
    fn = int((~flags & mask).sum())
    return DetectionMetrics(
        accuracy=float((flags == mask).mean()),
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
    )


def estimated_noise_rate(flags: np.ndarray) -> float:
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        raise ValueError("empty flag vector")
    return float(flags.mean())


def write_scores_csv(scores: NoiseScores, noise_mask: np.ndarray, path) -> None:
    import csv

    mask = np.asarray(noise_mask, dtype=bool)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "method", "score", "flagged",
                         "noise_mask"])
        for i in range(len(scores)):
            writer.writerow([int(scores.instance_ids[i]), scores.method,
                             repr(float(scores.scores[i])),
                             int(scores.flagged[i]), int(mask[i])])
