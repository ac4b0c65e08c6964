import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisygbdt.metrics_report import (RunReport, classification_metrics,
                                      load_report, prediction_type_counts,
                                      tables_rows, write_report)


class TestClassificationMetrics:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 1, 0])
        m = classification_metrics(y, y, 2)
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1, 1, 1, 1)

    def test_binary_confusion_example(self):
        # TP=3, FP=1, FN=2, TN=3
        labels = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0])
        preds = np.array([1, 1, 1, 0, 0, 1, 0, 0, 0])
        m = classification_metrics(preds, labels, 2)
        assert m.precision == pytest.approx(0.75)
        assert m.recall == pytest.approx(0.6)
        assert m.f1 == pytest.approx(2 / 3, abs=1e-3)

    def test_degenerate_single_class_predictor(self):
        labels = np.array([0, 0, 1, 1])
        preds = np.zeros(4, dtype=int)
        m = classification_metrics(preds, labels, 2)
        assert m.recall == 0.0  # positive class never predicted
        macro = classification_metrics(preds, labels, 3)
        assert macro.f1 < 0.5

    def test_multiclass_macro_average(self):
        labels = np.array([0, 0, 1, 1, 2, 2])
        preds = np.array([0, 0, 1, 0, 2, 1])
        m = classification_metrics(preds, labels, 3)
        # per-class recall: 1.0, 0.5, 0.5
        assert m.recall == pytest.approx((1.0 + 0.5 + 0.5) / 3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            classification_metrics(np.zeros(3), np.zeros(4), 2)

    @pytest.mark.properties
    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=40, deadline=None)
    def test_macro_f1_below_best_class_f1(self, seed):
        rng = np.random.default_rng(seed)
        c = 4
        labels = rng.integers(0, c, size=60)
        preds = rng.integers(0, c, size=60)
        m = classification_metrics(preds, labels, c)
        assert 0.0 <= m.accuracy <= 1.0
        per_class = []
        for k in range(c):
            mk = classification_metrics((preds == k).astype(int),
                                        (labels == k).astype(int), 2)
            per_class.append(mk.f1)
        assert m.f1 <= max(per_class) + 1e-12


class TestPredictionTypes:
    def test_three_buckets(self):
        clean = np.array([0, 0, 0, 1])
        noisy = np.array([1, 1, 1, 1])  # first three are noise-mask instances
        preds = np.array([0, 1, 2, 0])
        counts = prediction_type_counts(preds, clean, noisy)
        assert counts == {"true_match": 1, "noisy_match": 1, "other": 1}

    def test_counts_partition_mask(self):
        rng = np.random.default_rng(0)
        clean = rng.integers(0, 3, 50)
        noisy = clean.copy()
        flip = rng.random(50) < 0.4
        noisy[flip] = (clean[flip] + 1) % 3
        preds = rng.integers(0, 3, 50)
        counts = prediction_type_counts(preds, clean, noisy)
        assert sum(counts.values()) == int((clean != noisy).sum())

    def test_empty_mask(self):
        clean = np.array([0, 1])
        counts = prediction_type_counts(clean, clean, clean)
        assert counts == {"true_match": 0, "noisy_match": 0, "other": 0}


def sample_report():
    return RunReport(
        dataset="toy", noise_kind="pair", noise_rate=0.3,
        detection="aum", correction="remove", seed=7,
        config={"n_rounds": 3},
        rounds_trained=3, best_round=2, stopped_early=False,
        empirical_noise_rate=0.29,
        series={"train_logloss": [1.0, 0.8, 0.7],
                "test_logloss": [1.1, 0.9, 0.85],
                "train_accuracy": [0.5, 0.6, 0.7],
                "test_accuracy": [0.55, 0.65, 0.72]},
        prediction_types={"true_match": [5, 4, 3],
                          "noisy_match": [1, 2, 3], "other": [1, 1, 1]},
        detector_series={"aum": {"round": [2], "accuracy": [0.9],
                                 "precision": [0.8], "recall": [0.7],
                                 "flagged_fraction": [0.28],
                                 "flagged_count": [28],
                                 "flagged_noisy_count": [22]}},
        evaluation={"early_stop": {"round": 2, "methods": {
            "aum": {"accuracy": 0.9, "precision": 0.8, "recall": 0.7,
                    "flagged_fraction": 0.28, "round": 2}}}},
        final={"accuracy": 0.861, "precision": 0.7844, "recall": 0.5703,
               "f1": 0.6606},
        correction_summary={"mode": "remove", "removed_total": 28,
                            "relabeled_total": 0, "budget_hit_rounds": []},
        correction_events=[{"round": 2, "instance_id": 4, "action": "remove",
                            "old_label": 1, "new_label": "",
                            "was_actually_noisy": 1}],
    )


class TestWriteReport:
    def test_series_row_count(self, tmp_path):
        paths = write_report(sample_report(), tmp_path)
        lines = paths["series"].read_text().strip().splitlines()
        assert len(lines) == 1 + 3

    def test_byte_identical_except_timestamp(self, tmp_path):
        r1 = sample_report()
        r2 = sample_report()
        p1 = write_report(r1, tmp_path / "a")["report"]
        p2 = write_report(r2, tmp_path / "b")["report"]
        d1 = json.loads(p1.read_text())
        d2 = json.loads(p2.read_text())
        d1.pop("created_at")
        d2.pop("created_at")
        assert json.dumps(d1, sort_keys=True) == json.dumps(d2, sort_keys=True)

    def test_round_trip(self, tmp_path):
        paths = write_report(sample_report(), tmp_path)
        back = load_report(paths["report"])
        assert back.final["accuracy"] == pytest.approx(0.861)
        assert back.detector_series["aum"]["accuracy"] == [0.9]

    def test_tables_values_are_percent_two_decimals(self, tmp_path):
        rows = tables_rows(sample_report())
        by_metric = {r["metric"]: r for r in rows if r["detection"] == "aum"
                     and r["metric"] in ("accuracy", "precision", "recall", "f1")}
        # classification rows keep the run's own detection column
        acc = [r for r in rows if r["metric"] == "accuracy"][0]
        assert acc["value"] == 86.1
        prec = [r for r in rows if r["metric"] == "precision"][0]
        assert prec["value"] == 78.44
        det = [r for r in rows if r["metric"] == "detection_accuracy"][0]
        assert det["value"] == 90.0
        assert by_metric  # detection rows present

    def test_corrections_csv(self, tmp_path):
        paths = write_report(sample_report(), tmp_path)
        lines = paths["corrections"].read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("round,instance_id,action")
