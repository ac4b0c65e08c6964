"""Per-instance training dynamics: a rolling window of recent rounds plus
incremental accumulators maintained across the whole run.

The window (default 5 rounds) feeds the margin- and gradient-based detectors
and the relabeling window; the incremental sums feed the confidence /
variability / correctness statistics without storing full history.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

DEFAULT_WINDOW = 5


@dataclass
class EpochRecord:
    """Snapshot of one boosting round for every training instance."""

    round: int
    logits: np.ndarray            # (n, c)
    probs: np.ndarray             # (n, c)
    predicted: np.ndarray         # (n,) argmax class, ties -> lowest id
    max_abs_gradient: np.ndarray  # (n,) max over classes of |gradient|


class DynamicsLog:
    """Rolling window of EpochRecords plus running sums for the incremental
    statistics. Records must arrive in consecutive round order; accumulators
    use each instance's label as of recording time, so a mid-run relabel takes
    effect from the next recorded round onward."""

    def __init__(self, n_instances: int, class_count: int,
                 window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be at least 1")
        self.n_instances = n_instances
        self.class_count = class_count
        self.window_size = window
        self.window: deque[EpochRecord] = deque(maxlen=window)
        self.rounds_recorded = 0
        self._last_round: int | None = None
        self.sum_label_prob = np.zeros(n_instances)
        self.sum_label_prob_sq = np.zeros(n_instances)
        self.sum_correct = np.zeros(n_instances)

    def record(self, record: EpochRecord, labels: np.ndarray) -> None:
        expected = 0 if self._last_round is None else self._last_round + 1
        if record.round != expected:
            raise ValueError(
                f"out-of-order round {record.round}, expected {expected}")
        if record.probs.shape != (self.n_instances, self.class_count):
            raise ValueError("record shape does not match the log")
        p_label = record.probs[np.arange(self.n_instances), labels]
        self.sum_label_prob += p_label
        self.sum_label_prob_sq += p_label * p_label
        self.sum_correct += (record.predicted == labels)
        self.window.append(record)
        self.rounds_recorded += 1
        self._last_round = record.round

    # -- read-only views consumed by the detectors ---------------------------

    def latest(self) -> EpochRecord:
        if not self.window:
            raise ValueError("no rounds recorded")
        return self.window[-1]

    def window_logits(self) -> np.ndarray:
        """(w, n, c) logits of the retained rounds, oldest first."""
        return np.stack([r.logits for r in self.window])

    def window_probs(self) -> np.ndarray:
        return np.stack([r.probs for r in self.window])

    def window_max_abs_gradients(self) -> np.ndarray:
        """(w, n) per-round max-abs gradients of the retained rounds."""
        return np.stack([r.max_abs_gradient for r in self.window])

    def window_mean_probs(self) -> np.ndarray:
        """(n, c) probabilities averaged over the retained window."""
        return self.window_probs().mean(axis=0)

    def confidence(self) -> np.ndarray:
        """Mean probability assigned to the instance's label across all rounds."""
        self._require_rounds()
        return self.sum_label_prob / self.rounds_recorded

    def variability(self) -> np.ndarray:
        """Population standard deviation of the label-probability sequence."""
        self._require_rounds()
        t = self.rounds_recorded
        mean = self.sum_label_prob / t
        var = self.sum_label_prob_sq / t - mean * mean
        return np.sqrt(np.maximum(var, 0.0))

    def correctness(self) -> np.ndarray:
        """Fraction of rounds where the prediction equaled the instance's label."""
        self._require_rounds()
        return self.sum_correct / self.rounds_recorded

    def _require_rounds(self) -> None:
        if self.rounds_recorded == 0:
            raise ValueError("no rounds recorded")

    def dump_csv(self, path, instance_ids: np.ndarray | None = None) -> None:
        """Write the retained window to CSV, one row per (round, instance)."""
        import csv

        ids = (np.arange(self.n_instances) if instance_ids is None
               else np.asarray(instance_ids))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = (["round", "instance_id", "predicted", "max_abs_gradient"]
                      + [f"logit_{k}" for k in range(self.class_count)]
                      + [f"prob_{k}" for k in range(self.class_count)])
            writer.writerow(header)
            for rec in self.window:
                for i in range(self.n_instances):
                    writer.writerow(
                        [rec.round, int(ids[i]), int(rec.predicted[i]),
                         repr(float(rec.max_abs_gradient[i]))]
                        + [repr(float(v)) for v in rec.logits[i]]
                        + [repr(float(v)) for v in rec.probs[i]])
