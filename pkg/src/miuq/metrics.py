"""Accuracy and calibration metrics over per-trial class probabilities.

The central container is :class:`PredictionSet`: one row of class
probabilities per trial plus the true label.  All metrics are pure
functions of a PredictionSet, so the same code scores both internal
benchmark runs and externally produced prediction files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

PROB_SUM_ATOL = 1e-6
DEFAULT_N_BINS = 10


class PredictionSet:
    """Immutable bundle of per-trial class probabilities and true labels.

    ``probs`` holds one row per trial in the order of ``trial_ids``; columns
    follow ``class_ids``.  Rows must sum to 1 within 1e-6 and every entry
    must lie in [0, 1].  Confidence is the row maximum and the predicted
    class is the argmax, ties resolved toward the earliest class id.
    """

    __slots__ = ("_class_ids", "_trial_ids", "_y_true", "_probs", "_true_index")

    def __init__(
        self,
        class_ids: Sequence[str],
        trial_ids: Sequence[str],
        y_true: Sequence[str],
        probs: np.ndarray,
    ):
        class_ids = tuple(str(c) for c in class_ids)
        if len(class_ids) < 2:
            raise ValidationError(f"need at least 2 classes, got {len(class_ids)}")
        if len(set(class_ids)) != len(class_ids):
            raise ValidationError("class ids must be unique")
        if any(not c for c in class_ids):
            raise ValidationError("class ids must be non-empty strings")

        trial_ids = tuple(str(t) for t in trial_ids)
        if len(trial_ids) == 0:
            raise ValidationError("prediction set must contain at least one trial")
        if len(set(trial_ids)) != len(trial_ids):
            raise ValidationError("trial ids must be unique")

        y_true = tuple(str(y) for y in y_true)
        if len(y_true) != len(trial_ids):
            raise ValidationError(
                f"{len(y_true)} true labels for {len(trial_ids)} trials"
            )
        lookup = {c: i for i, c in enumerate(class_ids)}
        try:
            true_index = np.array([lookup[y] for y in y_true], dtype=np.intp)
        except KeyError as exc:
            raise ValidationError(
                f"true label {exc.args[0]!r} is not among class ids {class_ids}"
            ) from None

        arr = np.array(probs, dtype=np.float64)
        if arr.ndim != 2 or arr.shape != (len(trial_ids), len(class_ids)):
            raise ValidationError(
                f"probability array has shape {arr.shape}, expected "
                f"({len(trial_ids)}, {len(class_ids)})"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("probabilities contain non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError(
                f"probabilities must lie in [0, 1]; range is "
                f"[{arr.min():.6g}, {arr.max():.6g}]"
            )
        row_sums = arr.sum(axis=1)
        worst = np.argmax(np.abs(row_sums - 1.0))
        if abs(row_sums[worst] - 1.0) > PROB_SUM_ATOL:
            raise ValidationError(
                f"probability row for trial {trial_ids[worst]!r} sums to "
                f"{row_sums[worst]:.8f}, expected 1 within {PROB_SUM_ATOL}"
            )
        arr.flags.writeable = False
        true_index.flags.writeable = False

        self._class_ids = class_ids
        self._trial_ids = trial_ids
        self._y_true = y_true
        self._probs = arr
        self._true_index = true_index

    @property
    def class_ids(self) -> tuple:
        return self._class_ids

    @property
    def trial_ids(self) -> tuple:
        return self._trial_ids

    @property
    def y_true(self) -> tuple:
        return self._y_true

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def true_index(self) -> np.ndarray:
        return self._true_index

    @property
    def n_trials(self) -> int:
        return len(self._trial_ids)

    @property
    def n_classes(self) -> int:
        return len(self._class_ids)

    @property
    def predicted_index(self) -> np.ndarray:
        """Argmax per row; ties resolve toward the earliest class id."""
        return np.argmax(self._probs, axis=1)

    @property
    def predicted_labels(self) -> tuple:
        return tuple(self._class_ids[i] for i in self.predicted_index)

    @property
    def confidence(self) -> np.ndarray:
        return np.max(self._probs, axis=1)

    @property
    def correct(self) -> np.ndarray:
        return self.predicted_index == self._true_index

    def __len__(self) -> int:
        return len(self._trial_ids)

    def __repr__(self) -> str:
        return f"PredictionSet(n_trials={self.n_trials}, n_classes={self.n_classes})"


def accuracy(pred: PredictionSet) -> float:
    """Fraction of trials whose argmax class equals the true label."""
    return float(np.mean(pred.correct))


@dataclass(frozen=True)
class CalibrationBins:
    """Equal-width confidence bins with per-bin accuracy and confidence.

    Bin ``i`` (1-based) covers ``((i-1)/n_bins, i/n_bins]``; a confidence of
    exactly 0 lands in bin 1.  ``accuracy`` and ``mean_confidence`` are NaN
    for empty bins and ``counts`` always sums to the number of trials.
    """

    n_bins: int
    edges: np.ndarray
    counts: np.ndarray
    accuracy: np.ndarray
    mean_confidence: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def binned_calibration(
    confidence: np.ndarray, correct: np.ndarray, n_bins: int = DEFAULT_N_BINS
) -> CalibrationBins:
    """Bin raw confidence/correctness arrays; see :class:`CalibrationBins`."""
    if n_bins < 1:
        raise ValidationError(f"n_bins must be positive, got {n_bins}")
    conf = np.asarray(confidence, dtype=np.float64)
    correct = np.asarray(correct, dtype=np.float64)
    if conf.ndim != 1 or conf.shape != correct.shape or conf.size == 0:
        raise ValidationError(
            f"confidence and correctness must be matching non-empty 1-d arrays, "
            f"got shapes {conf.shape} and {correct.shape}"
        )
    if not np.all(np.isfinite(conf)) or conf.min() < 0.0 or conf.max() > 1.0:
        raise ValidationError("confidence values must be finite and lie in [0, 1]")
    # ceil(c * M) maps (0, 1] onto bins 1..M with right-inclusive edges;
    # the clip pulls c == 0 into bin 1
    idx = np.clip(np.ceil(conf * n_bins).astype(np.intp), 1, n_bins) - 1

    counts = np.zeros(n_bins, dtype=np.intp)
    acc = np.full(n_bins, np.nan)
    mean_conf = np.full(n_bins, np.nan)
    for b in range(n_bins):
        mask = idx == b
        n = int(mask.sum())
        counts[b] = n
        if n:
            acc[b] = float(correct[mask].mean())
            mean_conf[b] = float(conf[mask].mean())
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    for arr in (edges, counts, acc, mean_conf):
        arr.flags.writeable = False
    return CalibrationBins(n_bins=n_bins, edges=edges, counts=counts, accuracy=acc, mean_confidence=mean_conf)


def compute_bins(pred: PredictionSet, n_bins: int = DEFAULT_N_BINS) -> CalibrationBins:
    """Assign trials to right-inclusive equal-width confidence bins."""
    return binned_calibration(pred.confidence, pred.correct, n_bins)


def _weighted_gap(bins: CalibrationBins, signed: bool) -> float:
    occupied = bins.counts > 0
    w = bins.counts[occupied] / bins.counts.sum()
    gap = bins.accuracy[occupied] - bins.mean_confidence[occupied]
    return float(np.sum(w * gap)) if signed else float(np.sum(w * np.abs(gap)))


def ece_from_bins(bins: CalibrationBins) -> float:
    return _weighted_gap(bins, signed=False)


def nce_from_bins(bins: CalibrationBins) -> float:
    return _weighted_gap(bins, signed=True)


def ece(pred: PredictionSet, n_bins: int = DEFAULT_N_BINS) -> float:
    """Expected calibration error: count-weighted mean |accuracy - confidence|."""
    return ece_from_bins(compute_bins(pred, n_bins))


def nce(pred: PredictionSet, n_bins: int = DEFAULT_N_BINS) -> float:
    """Signed calibration error: count-weighted mean (accuracy - confidence).

    Positive values mean the model is underconfident (accuracy exceeds
    confidence), negative values mean overconfident.  |nce| <= ece always.
    """
    return nce_from_bins(compute_bins(pred, n_bins))


def brier(pred: PredictionSet, mode: str = "multiclass_sum") -> float:
    """Brier score of the probability rows against one-hot true labels.

    ``multiclass_sum`` averages the per-trial sum of squared errors over all
    classes (range [0, 2]).  ``binary_positive`` requires exactly two
    classes and scores only the probability of the positive class, taken to
    be the second entry of ``class_ids`` (range [0, 1]); the value does not
    depend on which of the two classes is called positive.
    """
    if mode == "multiclass_sum":
        onehot = np.zeros_like(pred.probs)
        onehot[np.arange(pred.n_trials), pred.true_index] = 1.0
        return float(np.mean(np.sum((pred.probs - onehot) ** 2, axis=1)))
    if mode == "binary_positive":
        if pred.n_classes != 2:
            raise ValidationError(
                f"binary_positive needs exactly 2 classes, got {pred.n_classes}"
            )
        p_pos = pred.probs[:, 1]
        y_pos = (pred.true_index == 1).astype(np.float64)
        return float(np.mean((p_pos - y_pos) ** 2))
    raise ValidationError(
        f"unknown brier mode {mode!r}; expected 'multiclass_sum' or 'binary_positive'"
    )


@dataclass(frozen=True)
class RejectionCurve:
    """Accuracy over the most-confident trials as low-confidence ones drop.

    Each point keeps the ``ceil((1 - fraction) * n)`` most confident trials;
    ``retained_counts`` is strictly decreasing because fractions that round
    to an already-listed count are dropped (the first occurrence wins).
    """

    fractions: np.ndarray
    retained_counts: np.ndarray
    accuracies: np.ndarray

    def accuracy_at(self, fraction: float) -> float:
        """Accuracy at the point whose requested fraction matches exactly."""
        hits = np.nonzero(self.fractions == fraction)[0]
        if hits.size == 0:
            raise ValidationError(f"fraction {fraction} is not on this curve")
        return float(self.accuracies[hits[0]])


def rejection_curve(pred: PredictionSet, fractions: Sequence[float] | None = None) -> RejectionCurve:
    """Accuracy-versus-rejection trade-off, rejecting least-confident first.

    Trials are ranked by confidence, highest first; equal confidences keep
    the prediction set's trial order.  At rejected fraction ``f`` the
    ``ceil((1 - f) * n)`` top-ranked trials are scored.  Fractions must be
    strictly increasing within [0, 1); at ``f = 0`` the value equals
    :func:`accuracy` exactly.
    """
    if fractions is None:
        fractions = np.linspace(0.0, 0.95, 20)
    frac = np.array(fractions, dtype=np.float64)
    if frac.ndim != 1 or frac.size == 0:
        raise ValidationError("fractions must be a non-empty 1-d sequence")
    if frac.min() < 0.0 or frac.max() >= 1.0:
        raise ValidationError(
            f"fractions must lie in [0, 1); range is [{frac.min():.4g}, {frac.max():.4g}]"
        )
    if frac.size > 1 and np.any(np.diff(frac) <= 0):
        raise ValidationError("fractions must be strictly increasing")

    n = pred.n_trials
    order = np.argsort(-pred.confidence, kind="stable")
    correct_by_rank = pred.correct[order].astype(np.float64)
    cum_correct = np.cumsum(correct_by_rank)

    kept_fracs, kept_counts, kept_accs = [], [], []
    for f in frac:
        # nudge below the float product so ceil of a mathematically integral
        # value (e.g. 0.95 * 400) is not pushed up by representation error
        m = max(1, int(np.ceil((1.0 - f) * n - 1e-9)))
        if kept_counts and kept_counts[-1] == m:
            continue
        kept_fracs.append(f)
        kept_counts.append(m)
        kept_accs.append(cum_correct[m - 1] / m)

    out_f = np.array(kept_fracs)
    out_c = np.array(kept_counts, dtype=np.intp)
    out_a = np.array(kept_accs)
    for arr in (out_f, out_c, out_a):
        arr.flags.writeable = False
    return RejectionCurve(fractions=out_f, retained_counts=out_c, accuracies=out_a)
