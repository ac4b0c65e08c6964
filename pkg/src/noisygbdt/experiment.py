"""Config-driven experiment stages.

Stage 1 trains uncorrected models over a (noise kind, rate) grid and records
per-round curves against the clean test set. Stage 2 runs the full detector x
correction grid plus an uncorrected baseline per grid point, sharing one noise
realization per (kind, rate) so cells differ only in the method. Stage 3
aggregates stage-2 reports into comparison tables.
"""

from __future__ import annotations

import dataclasses
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import datasets, detect, noise
from .correct import NoiseHandler
from .data_ingest import (DataIngestError, SplitSpec, load_csv, prepare,
                          subsample_table)
from .gbdt import BoostConfig, train
from .metrics_report import (RunReport, load_report, tables_rows,
                             write_tables_csv, write_report)

STAGES = (1, 2, 3)

MONITORS = ("none", "clean_test", "noisy_val")

# the comparison stage aggregates these rates only
COMPARISON_DETECTION_RATES = (0.1, 0.2, 0.3)
COMPARISON_CLASSIFICATION_RATE = 0.3

DEFAULT_RATES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


class ExperimentError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "dry_bean_like"
    label_column: str | None = None          # required for csv paths
    split: SplitSpec = field(default_factory=SplitSpec)
    noise_kinds: tuple = ("pair", "symmetric")
    noise_rates: tuple = DEFAULT_RATES
    boost: BoostConfig = field(default_factory=BoostConfig)
    detectors: tuple = detect.ALL_METHODS
    corrections: tuple = ("remove", "relabel")
    threshold_policy: str | None = None      # None keeps per-detector defaults
    # clean-test monitoring: a noisy holdout penalizes exactly the sharpening
    # that correction buys, truncating corrected runs back to the warm-up point
    monitor: str = "clean_test"
    noisy_val_fraction: float = 0.1
    removal_budget: float = 0.8
    seed: int = 7
    out_dir: str = "runs"
    subsample: int | None = None
    trials: int = 1
    jobs: int = 1
    dump_scores: bool = False

    def validate(self) -> None:
        if not self.noise_kinds or not self.noise_rates:
            raise ExperimentError("noise grids must be non-empty")
        for kind in self.noise_kinds:
            if kind not in noise.NOISE_KINDS:
                raise ExperimentError(f"unknown noise kind {kind!r}")
        for rate in self.noise_rates:
            if not (0.0 <= rate <= 1.0):
                raise ExperimentError(f"noise rate {rate} outside [0, 1]")
        for det in self.detectors:
            if det not in detect.ALL_METHODS:
                raise ExperimentError(f"unknown detector {det!r}")
        for corr in self.corrections:
            if corr not in ("remove", "relabel"):
                raise ExperimentError(f"unknown correction {corr!r}")
        if self.monitor not in MONITORS:
            raise ExperimentError(f"unknown monitor {self.monitor!r}")
        if not (0.0 < self.noisy_val_fraction < 0.5):
            raise ExperimentError("noisy_val_fraction must lie in (0, 0.5)")
        if self.trials < 1:
            raise ExperimentError("trials must be at least 1")
        if not datasets.is_builtin(self.dataset) and self.label_column is None:
            raise ExperimentError("csv datasets need label_column")

    def as_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        payload["split"] = dataclasses.asdict(self.split)
        payload["boost"] = dataclasses.asdict(self.boost)
        return payload


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        payload = yaml.safe_load(fh) or {}
    return config_from_dict(payload)


def config_from_dict(payload: dict) -> ExperimentConfig:
    payload = dict(payload)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ExperimentError(f"unknown config keys: {sorted(unknown)}")
    if "split" in payload and isinstance(payload["split"], dict):
        payload["split"] = SplitSpec(**payload["split"])
    if "boost" in payload and isinstance(payload["boost"], dict):
        payload["boost"] = BoostConfig(**payload["boost"])
    for key in ("noise_kinds", "noise_rates", "detectors", "corrections"):
        if key in payload:
            payload[key] = tuple(payload[key])
    cfg = ExperimentConfig(**payload)
    cfg.validate()
    return cfg


def derive_seed(master: int, *keys) -> int:
    """Stable sub-seed from a master seed and a mixed key path."""
    ints = [int(master) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            ints.append(zlib.crc32(key.encode()))
        elif isinstance(key, float):
            ints.append(int(round(key * 10_000)))
        else:
            ints.append(int(key) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


# --------------------------------------------------------------------------
# data preparation
# --------------------------------------------------------------------------

def prepare_data(cfg: ExperimentConfig, trial_seed: int):
    """Load or generate the dataset, then split with train-only statistics."""
    if datasets.is_builtin(cfg.dataset):
        table, label_column = datasets.load_builtin(
            cfg.dataset, n=cfg.subsample,
            seed=derive_seed(trial_seed, "datagen"))
        if (cfg.subsample is not None
                and table.n_rows > cfg.subsample):
            table = subsample_table(table, label_column, cfg.subsample,
                                    derive_seed(trial_seed, "subsample"))
    else:
        table = load_csv(cfg.dataset)
        label_column = cfg.label_column
        if cfg.subsample is not None and table.n_rows > cfg.subsample:
            table = subsample_table(table, label_column, cfg.subsample,
                                    derive_seed(trial_seed, "subsample"))
    spec = SplitSpec(test_fraction=cfg.split.test_fraction,
                     stratified=cfg.split.stratified,
                     seed=derive_seed(trial_seed, "split", cfg.split.seed))
    return prepare(table, label_column, spec)


def _carve_validation(train_ds, fraction: float, seed: int):
    """Stratified noisy-label holdout carved from the training split."""
    rng = np.random.default_rng(seed)
    n = len(train_ds)
    val_mask = np.zeros(n, dtype=bool)
    for cls in range(train_ds.class_count):
        idx = np.flatnonzero(train_ds.noisy_labels == cls)
        if len(idx) < 2:
            continue
        k = max(1, int(round(fraction * len(idx))))
        val_mask[rng.permutation(idx)[:k]] = True
    return train_ds.take(~val_mask), train_ds.take(val_mask)


# --------------------------------------------------------------------------
# single experiment cell
# --------------------------------------------------------------------------

def run_cell(cfg: ExperimentConfig, train_ds, test_ds, kind: str, rate: float,
             detector: str | None, correction: str,
             trial_seed: int) -> RunReport:
    """Train one (noise kind, rate, detector, correction) cell.

    The noise realization and validation carve depend only on
    (trial_seed, kind, rate), so all cells of one grid point share them.
    """
    noise_seed = derive_seed(trial_seed, "noise", kind, rate)
    matrix = noise.matrix_for(noise.NoiseSpec(kind=kind, rate=rate,
                                              seed=noise_seed),
                              train_ds.class_count)
    noisy_labels, _ = noise.inject(train_ds.clean_labels, matrix, noise_seed)
    noisy_train = train_ds.with_noise(noisy_labels)

    monitor = None
    fit_ds = noisy_train
    if cfg.monitor == "noisy_val":
        fit_ds, val_ds = _carve_validation(
            noisy_train, cfg.noisy_val_fraction,
            derive_seed(trial_seed, "val", kind, rate))
        monitor = (val_ds.features, val_ds.noisy_labels)
    elif cfg.monitor == "clean_test":
        monitor = "test"

    if correction == "none":
        handler = NoiseHandler(detectors=cfg.detectors, mode="none",
                               policy_override=cfg.threshold_policy)
    else:
        handler = NoiseHandler(detectors=(detector,), mode=correction,
                               removal_budget=cfg.removal_budget,
                               policy_override=cfg.threshold_policy)

    result = train(fit_ds, cfg.boost, handler, test=test_ds, monitor=monitor)
    report = result.report
    report.dataset = cfg.dataset
    report.noise_kind = kind
    report.noise_rate = rate
    report.detection = detector or "none"
    report.correction = correction
    report.seed = trial_seed
    report.note = "subsampled" if cfg.subsample else ""
    report.config = {"experiment": cfg.as_dict(), "training": report.config,
                     "noise_seed": noise_seed}
    report.correction_summary = handler.summary()
    return report


def _cell_dir(out_dir, stage: int, cfg, kind, rate, detector, correction,
              trial: int) -> Path:
    base = (Path(out_dir) / f"stage{stage}" / cfg.dataset
            / f"{kind}_{rate:.2f}")
    name = f"{correction}_{detector or 'none'}"
    if cfg.trials > 1:
        name += f"_trial{trial}"
    return base / name


def _trial_seeds(cfg: ExperimentConfig) -> list[int]:
    if cfg.trials == 1:
        return [cfg.seed]
    return [derive_seed(cfg.seed, "trial", k) for k in range(cfg.trials)]


def _stage_cells(cfg: ExperimentConfig, stage: int):
    for kind in cfg.noise_kinds:
        for rate in cfg.noise_rates:
            yield kind, rate, None, "none"
            if stage == 2:
                for detector in cfg.detectors:
                    for correction in cfg.corrections:
                        yield kind, rate, detector, correction


def _run_spec(args):
    cfg_payload, stage, kind, rate, detector, correction, trial_seed, \
        trial_index = args
    cfg = config_from_dict(cfg_payload)
    train_ds, test_ds = prepare_data(cfg, trial_seed)
    report = run_cell(cfg, train_ds, test_ds, kind, rate, detector,
                      correction, trial_seed)
    out = _cell_dir(cfg.out_dir, stage, cfg, kind, rate, detector, correction,
                    trial_index)
    write_report(report, out)
    return str(out)


def _run_stage_grid(cfg: ExperimentConfig, stage: int) -> list[RunReport]:
    cfg.validate()
    seeds = _trial_seeds(cfg)
    specs = []
    for trial_index, trial_seed in enumerate(seeds):
        for kind, rate, detector, correction in _stage_cells(cfg, stage):
            specs.append((cfg.as_dict(), stage, kind, rate, detector,
                          correction, trial_seed, trial_index))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            dirs = list(pool.map(_run_spec, specs))
    else:
        dirs = [_run_spec(spec) for spec in specs]
    return [load_report(Path(d) / "report.json") for d in dirs]


def run_stage1(cfg: ExperimentConfig) -> list[RunReport]:
    """Uncorrected noise-impact runs over the (kind, rate) grid."""
    return _run_stage_grid(cfg, stage=1)


def run_stage2(cfg: ExperimentConfig) -> list[RunReport]:
    """Detector x correction grid plus a baseline per (kind, rate)."""
    return _run_stage_grid(cfg, stage=2)


# --------------------------------------------------------------------------
# stage 3: comparison tables
# --------------------------------------------------------------------------

def _collect_stage2_reports(cfg: ExperimentConfig) -> list[RunReport]:
    root = Path(cfg.out_dir) / "stage2" / cfg.dataset
    paths = sorted(root.glob("**/report.json"))
    if not paths:
        raise ExperimentError(
            f"no stage-2 reports under {root}; run stage 2 first")
    return [load_report(p) for p in paths]


def _mark_best(rows: list[dict], group_keys, maximize=True) -> None:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in group_keys), []).append(row)
    for members in groups.values():
        best = max(m["value"] for m in members)
        for m in members:
            m["is_best"] = "yes" if m["value"] == best else ""


def _aggregate(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def run_stage3(cfg: ExperimentConfig, kind: str = "pair") -> dict:
    """Aggregate stage-2 reports into detection and classification tables.

    Detection accuracy is tabulated per (rate, detector) at the early-stopped
    epoch, taking the best value over the correction modes of that detector;
    classification metrics are tabulated per (correction, detector) at the
    comparison rate. Only rates between 10% and 40% enter the aggregation.
    """
    cfg.validate()
    reports = _collect_stage2_reports(cfg)
    reports = [r for r in reports if r.noise_kind == kind
               and 0.1 - 1e-9 <= r.noise_rate <= 0.4 + 1e-9]
    note = "subsampled" if cfg.subsample else ""

    detection_rows: list[dict] = []
    for rate in COMPARISON_DETECTION_RATES:
        for detector in cfg.detectors:
            cells = [r for r in reports
                     if abs(r.noise_rate - rate) < 1e-9
                     and r.detection == detector]
            values = []
            for r in cells:
                point = r.evaluation.get("early_stop", {})
                methods = point.get("methods", {})
                if detector in methods:
                    values.append(100.0 * methods[detector]["accuracy"])
            if not values:
                continue
            mean, std = _aggregate([max(values)] if cfg.trials == 1
                                   else values)
            row = {"dataset": cfg.dataset, "noise_kind": kind, "rate": rate,
                   "detection": detector, "correction": "best",
                   "metric": "detection_accuracy",
                   "value": round(max(values), 2),
                   "evaluated_at": "early_stop", "note": note, "is_best": ""}
            if cfg.trials > 1:
                row["value"] = round(mean, 2)
                row["note"] = (note + f" std={std:.2f}").strip()
            detection_rows.append(row)
    _mark_best(detection_rows, ("rate",))

    classification_rows: list[dict] = []
    rate = COMPARISON_CLASSIFICATION_RATE
    combos = [("none", "none")] + [
        (corr, det) for corr in ("relabel", "remove")
        for det in cfg.detectors]
    for correction, detector in combos:
        cells = [r for r in reports
                 if abs(r.noise_rate - rate) < 1e-9
                 and r.correction == correction and r.detection == detector]
        if not cells:
            continue
        for metric in ("accuracy", "precision", "recall", "f1"):
            values = [100.0 * r.final[metric] for r in cells if r.final]
            if not values:
                continue
            mean, std = _aggregate(values)
            row = {"dataset": cfg.dataset, "noise_kind": kind, "rate": rate,
                   "detection": detector, "correction": correction,
                   "metric": metric, "value": round(mean, 2),
                   "evaluated_at": "early_stop", "note": note, "is_best": ""}
            if cfg.trials > 1:
                row["note"] = (note + f" std={std:.2f}").strip()
            classification_rows.append(row)
    _mark_best(classification_rows, ("metric",))

    out = Path(cfg.out_dir) / "stage3" / cfg.dataset
    out.mkdir(parents=True, exist_ok=True)
    write_tables_csv(detection_rows, out / "detection_tables.csv")
    write_tables_csv(classification_rows, out / "classification_tables.csv")
    write_tables_csv(detection_rows + classification_rows, out / "tables.csv")
    return {"detection": detection_rows, "classification": classification_rows,
            "out_dir": str(out)}
