"""Within-subject benchmark: split, filter, fit, score, aggregate.

One run takes a list of epoch sets (one per subject), trains each model
on a stratified within-subject split, and reports accuracy plus
calibration metrics per subject and aggregated per dataset.  Everything
except wall-clock timings is deterministic given the config seed, so two
runs over the same inputs produce identical reports up to the timing
fields.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from statistics import median
from typing import Sequence

import numpy as np

from .calibration import fit_temperature
from .classifiers import (
    csp_lda_fit,
    mdrm_fit,
    mdrm_scores,
    predict_proba,
    predictions_for,
    with_temperature,
)
from .data_io import EpochSet
from .errors import MiuqError, ValidationError
from .metrics import (
    PredictionSet,
    accuracy,
    brier,
    compute_bins,
    ece,
    nce,
    rejection_curve,
)
from .signal import BandpassSpec, preprocess_epochs

MODEL_NAMES = ("mdrm", "mdrm_t", "csp_lda")
REPORT_FORMAT_VERSION = 1
BRIER_MODES = ("multiclass_sum", "binary_positive")
_DEFAULT_REJECTION = tuple(float(f) for f in np.linspace(0.0, 0.95, 20))


@dataclass(frozen=True)
class RunConfig:
    """Everything a benchmark run depends on besides the data itself."""

    train_frac: float = 0.8
    seed: int = 0
    shrinkage: float = 0.0
    n_filters: int = 8
    low_hz: float = 7.5
    high_hz: float = 30.0
    filter_order: int = 4
    n_bins: int = 10
    brier_mode: str = "multiclass_sum"
    temperature_objective: str = "ece"
    lda_ridge: float = 1e-4
    rejection_fractions: tuple = _DEFAULT_REJECTION

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise ValidationError(f"train_frac must lie in (0, 1), got {self.train_frac}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValidationError(f"seed must be an integer, got {self.seed!r}")
        if not 0.0 <= self.shrinkage < 1.0:
            raise ValidationError(f"shrinkage must lie in [0, 1), got {self.shrinkage}")
        if not (isinstance(self.n_filters, int) and self.n_filters >= 2):
            raise ValidationError(f"n_filters must be an integer >= 2, got {self.n_filters!r}")
        if not (isinstance(self.n_bins, int) and self.n_bins >= 1):
            raise ValidationError(f"n_bins must be a positive integer, got {self.n_bins!r}")
        if self.brier_mode not in BRIER_MODES:
            raise ValidationError(
                f"brier_mode must be one of {BRIER_MODES}, got {self.brier_mode!r}"
            )
        if self.temperature_objective not in ("ece", "nll"):
            raise ValidationError(
                f"temperature_objective must be 'ece' or 'nll', got {self.temperature_objective!r}"
            )
        if not 0.0 <= self.lda_ridge < 1.0:
            raise ValidationError(f"lda_ridge must lie in [0, 1), got {self.lda_ridge}")
        object.__setattr__(
            self, "rejection_fractions", tuple(float(f) for f in self.rejection_fractions)
        )

    def bandpass_spec(self, sample_rate_hz: float) -> BandpassSpec:
        return BandpassSpec(
            sample_rate_hz=sample_rate_hz,
            low_hz=self.low_hz,
            high_hz=self.high_hz,
            order=self.filter_order,
        )


def config_from_dict(data: dict) -> RunConfig:
    """Build a config from parsed JSON, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown config keys {unknown}; known keys are {sorted(known)}")
    return RunConfig(**data)


def split_within_subject(
    epochs: EpochSet, train_frac: float = 0.8, seed: int = 0
) -> tuple:
    """Stratified random split of one subject's epochs.

    Each class is permuted independently and cut at
    ``floor(train_frac * count + 0.5)``, clamped so both sides keep at
    least one epoch of every class.  The returned subsets preserve the
    original epoch order; their provenance records the source indices.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValidationError(f"train_frac must lie in (0, 1), got {train_frac}")
    rng = np.random.default_rng(seed)
    labels = np.array(epochs.labels)
    train_idx, test_idx = [], []
    for cls in epochs.class_ids:
        members = np.nonzero(labels == cls)[0]
        if members.size < 2:
            raise ValidationError(
                f"class {cls!r} has {members.size} epoch(s); a split needs at least 2"
            )
        n_train = int(math.floor(train_frac * members.size + 0.5))
        n_train = max(1, min(members.size - 1, n_train))
        permuted = members[rng.permutation(members.size)]
        train_idx.extend(permuted[:n_train])
        test_idx.extend(permuted[n_train:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))
    return epochs.subset(train_idx), epochs.subset(test_idx)


def compute_metrics(pred: PredictionSet, config: RunConfig) -> dict:
    """All scalar metrics plus curve data for one prediction set."""
    curve = rejection_curve(pred, config.rejection_fractions)
    bins = compute_bins(pred, config.n_bins)
    return {
        "metrics": {
            "accuracy": accuracy(pred),
            "ece": ece(pred, config.n_bins),
            "nce": nce(pred, config.n_bins),
            "brier": brier(pred, config.brier_mode),
        },
        "rejection": {
            "fractions": curve.fractions.tolist(),
            "retained_counts": curve.retained_counts.tolist(),
            "accuracies": curve.accuracies.tolist(),
        },
        "reliability": {
            "edges": bins.edges.tolist(),
            "counts": bins.counts.tolist(),
            "accuracy": _none_for_nan(bins.accuracy),
            "mean_confidence": _none_for_nan(bins.mean_confidence),
        },
    }


def _none_for_nan(values: np.ndarray) -> list:
    return [None if math.isnan(v) else float(v) for v in values]


@dataclass(frozen=True)
class SubjectResult:
    """One subject scored by one model, with everything the report needs."""

    dataset_id: str
    subject_id: str
    model: str
    n_train: int
    n_test: int
    metrics: dict
    rejection: dict
    reliability: dict
    temperature: float | None
    timing: dict
    split: dict
    predictions: PredictionSet = field(repr=False)

    def report_entry(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "subject_id": self.subject_id,
            "model": self.model,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "metrics": dict(self.metrics),
            "rejection": dict(self.rejection),
            "reliability": dict(self.reliability),
            "temperature": self.temperature,
            "timing": dict(self.timing),
            "split": dict(self.split),
        }


def _fit(model_name: str, train: EpochSet, config: RunConfig):
    """Fit one model; returns (model, fitted temperature or None)."""
    if model_name == "mdrm":
        return mdrm_fit(train, shrinkage=config.shrinkage), None
    if model_name == "mdrm_t":
        base = mdrm_fit(train, shrinkage=config.shrinkage)
        fit = fit_temperature(
            mdrm_scores(base, train),
            train.label_indices,
            n_bins=config.n_bins,
            objective=config.temperature_objective,
        )
        return with_temperature(base, fit.temperature), fit.temperature
    if model_name == "csp_lda":
        model = csp_lda_fit(
            train,
            n_filters=config.n_filters,
            shrinkage=config.shrinkage,
            lda_ridge=config.lda_ridge,
        )
        return model, None
    raise ValidationError(f"unknown model {model_name!r}; expected one of {MODEL_NAMES}")


def run_subject(epochs: EpochSet, model_name: str, config: RunConfig) -> SubjectResult:
    """Split one subject, train one model, and score the held-out epochs."""
    if model_name not in MODEL_NAMES:
        raise ValidationError(f"unknown model {model_name!r}; expected one of {MODEL_NAMES}")
    train, test = split_within_subject(epochs, config.train_frac, config.seed)
    spec = config.bandpass_spec(epochs.sample_rate_hz)
    train_f = preprocess_epochs(train, spec)
    test_f = preprocess_epochs(test, spec)

    t0 = time.perf_counter()
    model, temperature = _fit(model_name, train_f, config)
    fit_seconds = time.perf_counter() - t0

    trial_ids = [str(i) for i in test.provenance["subset_indices"]]
    preds = predictions_for(model, test_f, trial_ids=trial_ids)

    durations = []
    for _ in range(3):
        t0 = time.perf_counter()
        predict_proba(model, test_f)
        durations.append(time.perf_counter() - t0)
    inference_ms = median(durations) / test_f.n_epochs * 1000.0

    scored = compute_metrics(preds, config)
    return SubjectResult(
        dataset_id=epochs.dataset_id,
        subject_id=epochs.subject_id,
        model=model_name,
        n_train=train.n_epochs,
        n_test=test.n_epochs,
        metrics=scored["metrics"],
        rejection=scored["rejection"],
        reliability=scored["reliability"],
        temperature=temperature,
        timing={"fit_seconds": fit_seconds, "inference_ms_per_trial": inference_ms},
        split={
            "train_frac": config.train_frac,
            "seed": config.seed,
            "train_indices": [int(i) for i in train.provenance["subset_indices"]],
            "test_indices": [int(i) for i in test.provenance["subset_indices"]],
        },
        predictions=preds,
    )


def _aggregate(results: Sequence[SubjectResult]) -> list:
    """Mean and sample std of each metric, grouped by (dataset, model)."""
    groups: dict = {}
    order = []
    for r in results:
        key = (r.dataset_id, r.model)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for dataset_id, model in order:
        members = groups[(dataset_id, model)]
        entry = {
            "dataset_id": dataset_id,
            "model": model,
            "n_subjects": len(members),
            "single_subject": len(members) == 1,
            "metrics": {},
            "timing": {},
        }
        for name in members[0].metrics:
            values = np.array([m.metrics[name] for m in members], dtype=np.float64)
            entry["metrics"][name] = {
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
            }
        for name in ("fit_seconds", "inference_ms_per_trial"):
            entry["timing"][name] = float(np.mean([m.timing[name] for m in members]))
        out.append(entry)
    return out


def run_benchmark(
    epoch_sets: Sequence[EpochSet],
    model_names: Sequence[str] = MODEL_NAMES,
    config: RunConfig | None = None,
    skip_errors: bool = False,
) -> tuple:
    """Run every model on every subject; returns (report dict, results list).

    The report is JSON-serializable and contains no wall-clock state
    outside the per-entry ``timing`` dicts.  With ``skip_errors`` a
    failing subject/model pair is recorded under ``failures`` instead of
    aborting the run; the run still raises if nothing succeeds.
    """
    if config is None:
        config = RunConfig()
    sets = list(epoch_sets)
    if not sets:
        raise ValidationError("benchmark needs at least one epoch set")
    names = [str(n) for n in model_names]
    if not names:
        raise ValidationError("benchmark needs at least one model name")
    if len(set(names)) != len(names):
        raise ValidationError("model names must be unique")
    for n in names:
        if n not in MODEL_NAMES:
            raise ValidationError(f"unknown model {n!r}; expected one of {MODEL_NAMES}")
    seen = set()
    for es in sets:
        key = (es.dataset_id, es.subject_id)
        if key in seen:
            raise ValidationError(f"duplicate subject {key} in benchmark inputs")
        seen.add(key)

    results = []
    failures = []
    for es in sets:
        for name in names:
            if not skip_errors:
                results.append(run_subject(es, name, config))
                continue
            try:
                results.append(run_subject(es, name, config))
            except MiuqError as exc:
                failures.append(
                    {
                        "dataset_id": es.dataset_id,
                        "subject_id": es.subject_id,
                        "model": name,
                        "error": str(exc),
                    }
                )
    if not results:
        raise ValidationError(
            "every subject/model combination failed; first error: "
            f"{failures[0]['error']}"
        )

    report = {
        "report_format_version": REPORT_FORMAT_VERSION,
        "config": _config_dict(config),
        "model_names": names,
        "subjects": [r.report_entry() for r in results],
        "aggregates": _aggregate(results),
        "failures": failures,
    }
    return report, results


def _config_dict(config: RunConfig) -> dict:
    data = asdict(config)
    data["rejection_fractions"] = [float(f) for f in data["rejection_fractions"]]
    return data


def evaluate_external(pred: PredictionSet, config: RunConfig | None = None) -> dict:
    """Metrics-only evaluation of externally produced predictions."""
    if config is None:
        config = RunConfig()
    scored = compute_metrics(pred, config)
    return {
        "report_format_version": REPORT_FORMAT_VERSION,
        "n_trials": pred.n_trials,
        "class_ids": list(pred.class_ids),
        "metrics": scored["metrics"],
        "rejection": scored["rejection"],
        "reliability": scored["reliability"],
        "config": {
            "n_bins": config.n_bins,
            "brier_mode": config.brier_mode,
            "rejection_fractions": [float(f) for f in config.rejection_fractions],
        },
    }


def format_report_table(report: dict) -> str:
    """Plain-text summary: one block per dataset, one column per model."""
    models = list(report["model_names"])
    rows = [
        ("accuracy (%)", "accuracy", 100.0, 1),
        ("ece", "ece", 1.0, 3),
        ("nce", "nce", 1.0, 3),
        ("brier", "brier", 1.0, 3),
    ]
    by_key = {(a["dataset_id"], a["model"]): a for a in report["aggregates"]}
    datasets = []
    for a in report["aggregates"]:
        if a["dataset_id"] not in datasets:
            datasets.append(a["dataset_id"])

    width = max(18, max((len(m) for m in models), default=0) + 2)
    lines = []
    for dataset in datasets:
        any_entry = next(a for a in report["aggregates"] if a["dataset_id"] == dataset)
        lines.append(f"dataset: {dataset} ({any_entry['n_subjects']} subject(s))")
        header = "  " + "metric".ljust(22)
        for m in models:
            header += m.ljust(width)
        lines.append(header)
        for label, key, scale, digits in rows:
            line = "  " + label.ljust(22)
            for m in models:
                entry = by_key.get((dataset, m))
                if entry is None:
                    line += "-".ljust(width)
                    continue
                stats = entry["metrics"][key]
                cell = (
                    f"{stats['mean'] * scale:.{digits}f} "
                    f"± {stats['std'] * scale:.{digits}f}"
                )
                line += cell.ljust(width)
            lines.append(line)
        line = "  " + "fit time (s)".ljust(22)
        for m in models:
            entry = by_key.get((dataset, m))
            line += (f"{entry['timing']['fit_seconds']:.3f}" if entry else "-").ljust(width)
        lines.append(line)
        line = "  " + "inference (ms/trial)".ljust(22)
        for m in models:
            entry = by_key.get((dataset, m))
            line += (
                f"{entry['timing']['inference_ms_per_trial']:.3f}" if entry else "-"
            ).ljust(width)
        lines.append(line)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
