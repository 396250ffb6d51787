"""Motor-imagery classifiers over epoch covariance structure.

Two families:

* MDRM: each class is summarized by the Fréchet mean of its training
  covariances; a trial is scored by its affine-invariant distance to each
  mean, and probabilities come from a temperature-scaled softmax over the
  negated squared distances.  A fitted temperature (see
  :mod:`miuq.calibration`) turns the same distances into calibrated
  probabilities without touching the decision rule.
* CSP+LDA: spatial filters from a generalized eigendecomposition of class
  covariance averages, log-variance features, and a linear discriminant
  with a shared covariance, whose Gaussian posteriors serve as
  probabilities.

Fitting is deterministic: no randomness, no data-order dependence beyond
floating-point addition order, which is held fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .calibration import apply_temperature
from .data_io import EpochSet
from .errors import FormatError, FormatVersionError, ValidationError
from .features import csp_log_power, estimate_covariance
from .metrics import PredictionSet
from .spd import SpdMatrix, frechet_mean, riemannian_distance

MODEL_FORMAT_VERSION = 1
DEFAULT_N_FILTERS = 8
DEFAULT_LDA_RIDGE = 1e-4


@dataclass(frozen=True)
class MdrmModel:
    """Class-mean covariances plus the scoring temperature.

    ``means[k]`` is the Riemannian mean for ``class_ids[k]``.  ``shrinkage``
    is the covariance shrinkage used at fit time and is re-applied to every
    trial at inference so train and test estimates live on the same scale.
    With ``squared`` (the default) scores are negated squared distances.
    """

    class_ids: tuple
    means: tuple
    temperature: float = 1.0
    shrinkage: float = 0.0
    squared: bool = True

    def __post_init__(self):
        if len(self.class_ids) < 2:
            raise ValidationError("model needs at least 2 classes")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValidationError("class ids must be unique")
        if len(self.means) != len(self.class_ids):
            raise ValidationError(
                f"{len(self.means)} mean matrices for {len(self.class_ids)} classes"
            )
        if not all(isinstance(m, SpdMatrix) for m in self.means):
            raise ValidationError("class means must be SpdMatrix instances")
        dims = {m.dim for m in self.means}
        if len(dims) != 1:
            raise ValidationError(f"class means disagree on dimension: {sorted(dims)}")
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.shrinkage < 1.0:
            raise ValidationError(f"shrinkage must lie in [0, 1), got {self.shrinkage}")

    @property
    def n_channels(self) -> int:
        return self.means[0].dim


@dataclass(frozen=True)
class CspLdaModel:
    """Spatial filters plus a linear discriminant over log-variance features."""

    class_ids: tuple
    filters: np.ndarray
    feature_means: np.ndarray
    pooled_covariance: np.ndarray
    priors: np.ndarray
    shrinkage: float = 0.0

    def __post_init__(self):
        k = len(self.class_ids)
        if k < 2:
            raise ValidationError("model needs at least 2 classes")
        if len(set(self.class_ids)) != k:
            raise ValidationError("class ids must be unique")
        w = np.array(self.filters, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1:
            raise ValidationError(f"filters must be (n_filters, n_channels), got {w.shape}")
        mu = np.array(self.feature_means, dtype=np.float64)
        if mu.shape != (k, w.shape[0]):
            raise ValidationError(
                f"feature means have shape {mu.shape}, expected ({k}, {w.shape[0]})"
            )
        cov = np.array(self.pooled_covariance, dtype=np.float64)
        if cov.shape != (w.shape[0], w.shape[0]):
            raise ValidationError(
                f"pooled covariance has shape {cov.shape}, expected square of size {w.shape[0]}"
            )
        if np.max(np.abs(cov - cov.T)) > 1e-10:
            raise ValidationError("pooled covariance must be symmetric")
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValidationError("pooled covariance must be positive definite")
        pri = np.array(self.priors, dtype=np.float64)
        if pri.shape != (k,) or pri.min() <= 0 or abs(pri.sum() - 1.0) > 1e-9:
            raise ValidationError("priors must be positive and sum to 1, one per class")
        if not 0.0 <= self.shrinkage < 1.0:
            raise ValidationError(f"shrinkage must lie in [0, 1), got {self.shrinkage}")
        for name, arr in (
            ("filters", w),
            ("feature_means", mu),
            ("pooled_covariance", cov),
            ("priors", pri),
        ):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_channels(self) -> int:
        return self.filters.shape[1]

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]


Model = Union[MdrmModel, CspLdaModel]


def _resolve_class_ids(epochs: EpochSet, class_ids) -> tuple:
    if class_ids is None:
        return epochs.class_ids
    out = tuple(str(c) for c in class_ids)
    if set(out) != set(epochs.class_ids) or len(out) != len(epochs.class_ids):
        raise ValidationError(
            f"class ids {out} must be a reordering of the epoch set's {epochs.class_ids}"
        )
    return out


def _grouped_covariances(epochs: EpochSet, shrinkage: float, class_ids: tuple):
    """Per-class lists of per-epoch covariance estimates, in class order."""
    groups = {c: [] for c in class_ids}
    tensor = epochs.tensor.astype(np.float64)
    for i, label in enumerate(epochs.labels):
        groups[label].append(estimate_covariance(tensor[i], shrinkage))
    empty = [c for c in class_ids if not groups[c]]
    if empty:
        raise ValidationError(f"no training epochs for classes {empty}")
    return [groups[c] for c in class_ids]


def mdrm_fit(
    epochs: EpochSet,
    shrinkage: float = 0.0,
    class_ids: Sequence[str] | None = None,
    mean_tol: float = 1e-9,
    mean_max_iter: int = 50,
) -> MdrmModel:
    """Fit per-class Riemannian mean covariances."""
    ids = _resolve_class_ids(epochs, class_ids)
    groups = _grouped_covariances(epochs, shrinkage, ids)
    means = tuple(frechet_mean(g, tol=mean_tol, max_iter=mean_max_iter) for g in groups)
    return MdrmModel(class_ids=ids, means=means, shrinkage=shrinkage)


def with_temperature(model: MdrmModel, temperature: float) -> MdrmModel:
    """The same class means scored at a different temperature."""
    if not isinstance(model, MdrmModel):
        raise ValidationError("only distance-based models carry a temperature")
    return replace(model, temperature=float(temperature))


def _trial_covariances(model: MdrmModel, epochs) -> list:
    if isinstance(epochs, EpochSet):
        if epochs.n_channels != model.n_channels:
            raise ValidationError(
                f"model expects {model.n_channels} channels, epoch set has {epochs.n_channels}"
            )
        tensor = epochs.tensor.astype(np.float64)
        return [estimate_covariance(tensor[i], model.shrinkage) for i in range(len(tensor))]
    covs = list(epochs)
    if not covs:
        raise ValidationError("need at least one trial")
    for c in covs:
        if not isinstance(c, SpdMatrix):
            raise ValidationError("trials must be an EpochSet or a sequence of SpdMatrix")
        if c.dim != model.n_channels:
            raise ValidationError(
                f"model expects {model.n_channels} channels, covariance has {c.dim}"
            )
    return covs


def mdrm_distances(model: MdrmModel, epochs) -> np.ndarray:
    """(n_trials, n_classes) affine-invariant distances to the class means.

    ``epochs`` is an :class:`~miuq.data_io.EpochSet` (covariances are
    estimated with the model's shrinkage) or a sequence of
    :class:`~miuq.spd.SpdMatrix`.
    """
    covs = _trial_covariances(model, epochs)
    out = np.empty((len(covs), len(model.class_ids)))
    for i, cov in enumerate(covs):
        for k, mean in enumerate(model.means):
            out[i, k] = riemannian_distance(cov, mean)
    return out


def mdrm_scores(model: MdrmModel, epochs) -> np.ndarray:
    """Pre-softmax scores: negated (squared) distances."""
    d = mdrm_distances(model, epochs)
    return -(d**2) if model.squared else -d


def csp_filters(
    class_covariances: Sequence[SpdMatrix], n_filters: int = DEFAULT_N_FILTERS
) -> np.ndarray:
    """Spatial filters from class-average covariances.

    Two classes: generalized eigenvectors of (S1, S1 + S2); the top and
    bottom ``n_filters / 2`` of the eigenvalue range are kept (extreme
    variance ratios), so ``n_filters`` must be even.  More classes: each
    class contributes its top one-vs-rest eigenvectors, splitting
    ``n_filters`` as evenly as possible with earlier classes taking the
    remainder.  Every filter row is sign-normalized so its largest-magnitude
    entry is positive.
    """
    covs = list(class_covariances)
    k = len(covs)
    if k < 2:
        raise ValidationError("need covariances for at least 2 classes")
    if not all(isinstance(c, SpdMatrix) for c in covs):
        raise ValidationError("class covariances must be SpdMatrix instances")
    dim = covs[0].dim
    if any(c.dim != dim for c in covs):
        raise ValidationError("class covariances disagree on dimension")
    if n_filters < 2:
        raise ValidationError(f"need at least 2 filters, got {n_filters}")

    if k == 2:
        if n_filters % 2:
            raise ValidationError(f"two-class filter count must be even, got {n_filters}")
        half = n_filters // 2
        if half > dim:
            raise ValidationError(
                f"{n_filters} filters need {half} per extreme but only {dim} channels exist"
            )
        s1, s2 = covs[0].values, covs[1].values
        _, vecs = scipy.linalg.eigh(s1, s1 + s2)
        rows = [vecs[:, -(j + 1)] for j in range(half)]
        rows += [vecs[:, j] for j in range(half)]
    else:
        if n_filters < k:
            raise ValidationError(
                f"{k} classes need at least one filter each, got {n_filters}"
            )
        per_class = [n_filters // k + (1 if j < n_filters % k else 0) for j in range(k)]
        if max(per_class) > dim:
            raise ValidationError(
                f"a class would get {max(per_class)} filters but only {dim} channels exist"
            )
        rows = []
        for j, count in enumerate(per_class):
            rest = np.mean([covs[m].values for m in range(k) if m != j], axis=0)
            own = covs[j].values
            _, vecs = scipy.linalg.eigh(own, own + rest)
            rows += [vecs[:, -(c + 1)] for c in range(count)]

    w = np.array(rows)
    peak = np.argmax(np.abs(w), axis=1)
    signs = np.sign(w[np.arange(w.shape[0]), peak])
    w *= signs[:, None]
    w.flags.writeable = False
    return w


def _feature_matrix(filters: np.ndarray, epochs: EpochSet) -> np.ndarray:
    tensor = epochs.tensor.astype(np.float64)
    return np.array([csp_log_power(filters, tensor[i]) for i in range(len(tensor))])


def csp_lda_fit(
    epochs: EpochSet,
    n_filters: int = DEFAULT_N_FILTERS,
    shrinkage: float = 0.0,
    lda_ridge: float = DEFAULT_LDA_RIDGE,
    class_ids: Sequence[str] | None = None,
) -> CspLdaModel:
    """Fit spatial filters and the linear discriminant in one pass.

    Class covariance averages are arithmetic means of per-epoch (shrunk)
    covariance estimates.  The discriminant pools within-class feature
    scatter with ``N - K`` degrees of freedom and adds a small ridge toward
    the scaled identity so it stays invertible; priors are the empirical
    class frequencies.  Every class needs at least 2 training epochs.
    """
    if not 0.0 <= lda_ridge < 1.0:
        raise ValidationError(f"lda_ridge must lie in [0, 1), got {lda_ridge}")
    ids = _resolve_class_ids(epochs, class_ids)
    groups = _grouped_covariances(epochs, shrinkage, ids)
    for c, g in zip(ids, groups):
        if len(g) < 2:
            raise ValidationError(
                f"class {c!r} has {len(g)} training epoch(s); the pooled "
                "discriminant needs at least 2 per class"
            )
    class_avgs = [SpdMatrix(np.mean([m.values for m in g], axis=0)) for g in groups]
    filters = csp_filters(class_avgs, n_filters)

    feats = _feature_matrix(filters, epochs)
    label_idx = np.array([ids.index(lab) for lab in epochs.labels])
    n, f = feats.shape
    k = len(ids)
    means = np.empty((k, f))
    scatter = np.zeros((f, f))
    counts = np.empty(k)
    for j in range(k):
        block = feats[label_idx == j]
        counts[j] = block.shape[0]
        means[j] = block.mean(axis=0)
        centered = block - means[j]
        scatter += centered.T @ centered
    pooled = scatter / (n - k)
    if lda_ridge > 0.0:
        pooled = (1.0 - lda_ridge) * pooled + lda_ridge * (np.trace(pooled) / f) * np.eye(f)
    priors = counts / n
    return CspLdaModel(
        class_ids=ids,
        filters=filters,
        feature_means=means,
        pooled_covariance=pooled,
        priors=priors,
        shrinkage=shrinkage,
    )


def lda_posteriors(model: CspLdaModel, features: np.ndarray) -> np.ndarray:
    """Gaussian posteriors of the shared-covariance discriminant.

    Log-domain with max subtraction, so far-out feature vectors cannot
    underflow to an all-zero row.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_filters:
        raise ValidationError(
            f"features must be (n_trials, {model.n_filters}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("features contain non-finite values")
    cho = scipy.linalg.cho_factor(np.array(model.pooled_covariance), lower=True)
    logits = np.empty((x.shape[0], len(model.class_ids)))
    for j in range(len(model.class_ids)):
        diff = x - model.feature_means[j]
        solved = scipy.linalg.cho_solve(cho, diff.T).T
        logits[:, j] = np.log(model.priors[j]) - 0.5 * np.sum(diff * solved, axis=1)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(model: Model, epochs) -> np.ndarray:
    """(n_trials, n_classes) probabilities, columns in ``model.class_ids`` order."""
    if isinstance(model, MdrmModel):
        return apply_temperature(mdrm_scores(model, epochs), model.temperature)
    if isinstance(model, CspLdaModel):
        if not isinstance(epochs, EpochSet):
            raise ValidationError("CSP+LDA prediction needs an EpochSet")
        if epochs.n_channels != model.n_channels:
            raise ValidationError(
                f"model expects {model.n_channels} channels, epoch set has {epochs.n_channels}"
            )
        return lda_posteriors(model, _feature_matrix(model.filters, epochs))
    raise ValidationError(f"unknown model type {type(model).__name__}")


def predict_labels(model: Model, epochs) -> tuple:
    """Argmax class per trial; ties resolve to the earliest class id."""
    probs = predict_proba(model, epochs)
    return tuple(model.class_ids[i] for i in np.argmax(probs, axis=1))


def predictions_for(model: Model, epochs: EpochSet, trial_ids=None) -> PredictionSet:
    """Score an epoch set into a :class:`~miuq.metrics.PredictionSet`.

    Trial ids default to the epoch positions; the true labels come from the
    epoch set, re-expressed in the model's class order.
    """
    if not isinstance(epochs, EpochSet):
        raise ValidationError("predictions_for needs an EpochSet")
    if set(epochs.class_ids) != set(model.class_ids):
        raise ValidationError(
            f"epoch set classes {epochs.class_ids} do not match model classes {model.class_ids}"
        )
    probs = predict_proba(model, epochs)
    if trial_ids is None:
        trial_ids = [str(i) for i in range(epochs.n_epochs)]
    return PredictionSet(model.class_ids, trial_ids, epochs.labels, probs)


def save_model(model: Model, path: str | Path) -> Path:
    """Serialize a fitted model as versioned JSON."""
    if isinstance(model, MdrmModel):
        payload = {
            "model_type": "mdrm",
            "class_ids": list(model.class_ids),
            "means": [m.values.tolist() for m in model.means],
            "temperature": model.temperature,
            "shrinkage": model.shrinkage,
            "squared": model.squared,
        }
    elif isinstance(model, CspLdaModel):
        payload = {
            "model_type": "csp_lda",
            "class_ids": list(model.class_ids),
            "filters": model.filters.tolist(),
            "feature_means": model.feature_means.tolist(),
            "pooled_covariance": model.pooled_covariance.tolist(),
            "priors": model.priors.tolist(),
            "shrinkage": model.shrinkage,
        }
    else:
        raise ValidationError(f"unknown model type {type(model).__name__}")
    payload["format_version"] = MODEL_FORMAT_VERSION
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model(path: str | Path) -> Model:
    """Load a model written by :func:`save_model`, re-validating everything."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError(f"{path} must hold a JSON object")
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported model format_version {version!r}; this code reads "
            f"version {MODEL_FORMAT_VERSION}"
        )
    kind = payload.get("model_type")
    try:
        if kind == "mdrm":
            return MdrmModel(
                class_ids=tuple(payload["class_ids"]),
                means=tuple(SpdMatrix(np.array(m)) for m in payload["means"]),
                temperature=float(payload["temperature"]),
                shrinkage=float(payload["shrinkage"]),
                squared=bool(payload["squared"]),
            )
        if kind == "csp_lda":
            return CspLdaModel(
                class_ids=tuple(payload["class_ids"]),
                filters=np.array(payload["filters"]),
                feature_means=np.array(payload["feature_means"]),
                pooled_covariance=np.array(payload["pooled_covariance"]),
                priors=np.array(payload["priors"]),
                shrinkage=float(payload["shrinkage"]),
            )
    except KeyError as exc:
        raise FormatError(f"{path} is missing model field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise FormatError(f"{path} holds an invalid model: {exc}") from exc
        raise FormatError(f"{path} holds malformed model data: {exc}") from exc
    raise FormatError(f"{path} declares unknown model_type {kind!r}")
