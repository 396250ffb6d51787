"""Epoch storage, prediction files, and synthetic data generation.

An :class:`EpochSet` lives on disk as a directory with three files:

* ``manifest.json`` describes dimensions, channel/class vocabularies,
  sample rate, provenance, and sha256 checksums of the other two files.
* ``tensor.f32`` holds the raw signal as little-endian float32, C-order,
  shaped (n_epochs, n_channels, n_samples), epoch-major.
* ``labels.txt`` holds one class id per line, one line per epoch.

The format is deliberately dumb: any tool that can write those three
files can feed the pipeline, and the manifest checksums make truncation
or corruption loud.  Writers are expected to be the only process
touching a set's directory while writing.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ChecksumError,
    FormatError,
    FormatVersionError,
    TensorSizeError,
    ValidationError,
)
from .features import Epoch
from .metrics import PredictionSet
from .spd import SpdMatrix, geodesic, matrix_fn

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
TENSOR_NAME = "tensor.f32"
LABELS_NAME = "labels.txt"


def _check_id_tuple(values, what: str, minimum: int) -> tuple:
    out = tuple(str(v) for v in values)
    if len(out) < minimum:
        raise ValidationError(f"need at least {minimum} {what}, got {len(out)}")
    if len(set(out)) != len(out):
        raise ValidationError(f"{what} must be unique")
    if any(not v for v in out):
        raise ValidationError(f"{what} must be non-empty strings")
    return out


class EpochSet:
    """Immutable set of equally shaped epochs from one recording subject.

    The signal tensor is stored float32 (the on-disk precision, so write
    followed by read is bit-identical); labels, channel names and class
    ids are tuples.  ``provenance`` is a JSON-serializable dict recording
    how the data came to be; transformations append to it.
    """

    __slots__ = (
        "_tensor",
        "_labels",
        "_class_ids",
        "_channel_names",
        "_sample_rate_hz",
        "_dataset_id",
        "_subject_id",
        "_provenance",
    )

    def __init__(
        self,
        tensor: np.ndarray,
        labels: Sequence[str],
        class_ids: Sequence[str],
        channel_names: Sequence[str],
        sample_rate_hz: float,
        dataset_id: str,
        subject_id: str,
        provenance: dict | None = None,
    ):
        arr = np.ascontiguousarray(tensor, dtype=np.float32).copy()
        if arr.ndim != 3:
            raise ValidationError(
                f"tensor must be 3-d (epochs, channels, samples), got shape {arr.shape}"
            )
        n_epochs, n_channels, n_samples = arr.shape
        if n_epochs < 1:
            raise ValidationError("epoch set must contain at least one epoch")
        if n_channels < 1:
            raise ValidationError("epoch set must have at least one channel")
        if n_samples <= n_channels:
            raise ValidationError(
                f"{n_samples} samples for {n_channels} channels; full-rank "
                "covariances need more samples than channels"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("tensor contains non-finite values")

        self._class_ids = _check_id_tuple(class_ids, "class ids", 2)
        self._channel_names = _check_id_tuple(channel_names, "channel names", 1)
        if len(self._channel_names) != n_channels:
            raise ValidationError(
                f"{len(self._channel_names)} channel names for {n_channels} channels"
            )

        labels = tuple(str(v) for v in labels)
        if len(labels) != n_epochs:
            raise ValidationError(f"{len(labels)} labels for {n_epochs} epochs")
        known = set(self._class_ids)
        for i, lab in enumerate(labels):
            if lab not in known:
                raise ValidationError(
                    f"label {lab!r} of epoch {i} is not among class ids {self._class_ids}"
                )

        if not (isinstance(sample_rate_hz, (int, float)) and math.isfinite(sample_rate_hz)):
            raise ValidationError(f"sample rate must be a finite number, got {sample_rate_hz!r}")
        if sample_rate_hz <= 0:
            raise ValidationError(f"sample rate must be positive, got {sample_rate_hz}")
        if not isinstance(dataset_id, str) or not dataset_id:
            raise ValidationError("dataset id must be a non-empty string")
        if not isinstance(subject_id, str) or not subject_id:
            raise ValidationError("subject id must be a non-empty string")

        prov = provenance if provenance is not None else {}
        try:
            prov = json.loads(json.dumps(prov))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"provenance must be JSON-serializable: {exc}") from exc
        if not isinstance(prov, dict):
            raise ValidationError("provenance must be a dict")

        arr.flags.writeable = False
        self._tensor = arr
        self._labels = labels
        self._sample_rate_hz = float(sample_rate_hz)
        self._dataset_id = dataset_id
        self._subject_id = subject_id
        self._provenance = prov

    @property
    def tensor(self) -> np.ndarray:
        """(n_epochs, n_channels, n_samples) float32, read-only."""
        return self._tensor

    @property
    def labels(self) -> tuple:
        return self._labels

    @property
    def class_ids(self) -> tuple:
        return self._class_ids

    @property
    def channel_names(self) -> tuple:
        return self._channel_names

    @property
    def sample_rate_hz(self) -> float:
        return self._sample_rate_hz

    @property
    def dataset_id(self) -> str:
        return self._dataset_id

    @property
    def subject_id(self) -> str:
        return self._subject_id

    @property
    def provenance(self) -> dict:
        return copy.deepcopy(self._provenance)

    @property
    def n_epochs(self) -> int:
        return self._tensor.shape[0]

    @property
    def n_channels(self) -> int:
        return self._tensor.shape[1]

    @property
    def n_samples(self) -> int:
        return self._tensor.shape[2]

    @property
    def label_indices(self) -> np.ndarray:
        """Class index per epoch, following the ``class_ids`` order."""
        lookup = {c: i for i, c in enumerate(self._class_ids)}
        out = np.array([lookup[lab] for lab in self._labels], dtype=np.intp)
        out.flags.writeable = False
        return out

    def epoch(self, i: int) -> Epoch:
        """Epoch ``i`` as float64 with its label and sample rate."""
        if not 0 <= i < self.n_epochs:
            raise ValidationError(f"epoch index {i} out of range [0, {self.n_epochs})")
        return Epoch(
            self._tensor[i].astype(np.float64),
            self._labels[i],
            sample_rate_hz=self._sample_rate_hz,
        )

    def subset(self, indices: Sequence[int]) -> "EpochSet":
        """New set holding the given epochs, in the given order."""
        idx = np.asarray(indices)
        if idx.ndim != 1 or idx.size == 0:
            raise ValidationError("subset needs a non-empty 1-d index sequence")
        if not np.issubdtype(idx.dtype, np.integer):
            raise ValidationError("subset indices must be integers")
        if idx.min() < 0 or idx.max() >= self.n_epochs:
            raise ValidationError(
                f"subset indices must lie in [0, {self.n_epochs}), got range "
                f"[{idx.min()}, {idx.max()}]"
            )
        if np.unique(idx).size != idx.size:
            raise ValidationError("subset indices must be unique")
        prov = self.provenance
        prov["subset_indices"] = [int(v) for v in idx]
        prov["subset_parent_epochs"] = self.n_epochs
        return EpochSet(
            tensor=self._tensor[idx],
            labels=[self._labels[i] for i in idx],
            class_ids=self._class_ids,
            channel_names=self._channel_names,
            sample_rate_hz=self._sample_rate_hz,
            dataset_id=self._dataset_id,
            subject_id=self._subject_id,
            provenance=prov,
        )

    def with_tensor(self, tensor: np.ndarray, provenance_update: dict | None = None) -> "EpochSet":
        """Same metadata and labels over a transformed signal tensor."""
        arr = np.asarray(tensor)
        if arr.shape[:2] != (self.n_epochs, self.n_channels):
            raise ValidationError(
                f"replacement tensor shape {arr.shape} does not keep "
                f"(n_epochs, n_channels) = ({self.n_epochs}, {self.n_channels})"
            )
        prov = self.provenance
        prov.update(provenance_update or {})
        return EpochSet(
            tensor=arr,
            labels=self._labels,
            class_ids=self._class_ids,
            channel_names=self._channel_names,
            sample_rate_hz=self._sample_rate_hz,
            dataset_id=self._dataset_id,
            subject_id=self._subject_id,
            provenance=prov,
        )

    def __repr__(self) -> str:
        return (
            f"EpochSet(dataset={self._dataset_id!r}, subject={self._subject_id!r}, "
            f"epochs={self.n_epochs}, channels={self.n_channels}, samples={self.n_samples})"
        )


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_epochset(epochs: EpochSet, path: str | Path, overwrite: bool = False) -> Path:
    """Write an EpochSet directory; see the module docstring for the layout.

    Refuses to touch an existing directory unless ``overwrite`` is set.
    Each file lands via write-to-temp plus rename, but the three files as
    a group are not transactional; concurrent writers are not supported.
    """
    path = Path(path)
    if path.exists():
        if not overwrite:
            raise FileExistsError(f"{path} already exists; pass overwrite=True to replace it")
        if not path.is_dir():
            raise NotADirectoryError(f"{path} exists and is not a directory")
    path.mkdir(parents=True, exist_ok=True)

    tensor_bytes = epochs.tensor.astype("<f4", copy=False).tobytes(order="C")
    labels_bytes = ("\n".join(epochs.labels) + "\n").encode("utf-8")
    manifest = {
        "format_version": FORMAT_VERSION,
        "dataset_id": epochs.dataset_id,
        "subject_id": epochs.subject_id,
        "sample_rate_hz": epochs.sample_rate_hz,
        "channel_names": list(epochs.channel_names),
        "class_ids": list(epochs.class_ids),
        "n_epochs": epochs.n_epochs,
        "n_channels": epochs.n_channels,
        "n_samples": epochs.n_samples,
        "provenance": epochs.provenance,
        "checksums": {
            TENSOR_NAME: _sha256(tensor_bytes),
            LABELS_NAME: _sha256(labels_bytes),
        },
    }
    manifest_bytes = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")

    _atomic_write(path / TENSOR_NAME, tensor_bytes)
    _atomic_write(path / LABELS_NAME, labels_bytes)
    _atomic_write(path / MANIFEST_NAME, manifest_bytes)
    return path


def _manifest_field(manifest: dict, key: str, kinds, what: str):
    if key not in manifest:
        raise FormatError(f"manifest is missing required field {key!r}")
    value = manifest[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise FormatError(f"manifest field {key!r} must be {what}, got {type(value).__name__}")
    return value


def read_epochset(path: str | Path) -> EpochSet:
    """Read an EpochSet directory, verifying structure and checksums.

    Raises :class:`~miuq.errors.FormatVersionError` for unknown versions,
    :class:`~miuq.errors.TensorSizeError` when the tensor byte count
    disagrees with the manifest dimensions, and
    :class:`~miuq.errors.ChecksumError` on content mismatch.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise FormatError(f"{manifest_path} must hold a JSON object")

    version = _manifest_field(manifest, "format_version", int, "an integer")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported format_version {version}; this code reads version {FORMAT_VERSION}"
        )

    n_epochs = _manifest_field(manifest, "n_epochs", int, "an integer")
    n_channels = _manifest_field(manifest, "n_channels", int, "an integer")
    n_samples = _manifest_field(manifest, "n_samples", int, "an integer")
    sample_rate = _manifest_field(manifest, "sample_rate_hz", (int, float), "a number")
    dataset_id = _manifest_field(manifest, "dataset_id", str, "a string")
    subject_id = _manifest_field(manifest, "subject_id", str, "a string")
    channel_names = _manifest_field(manifest, "channel_names", list, "a list")
    class_ids = _manifest_field(manifest, "class_ids", list, "a list")
    provenance = _manifest_field(manifest, "provenance", dict, "an object")
    checksums = _manifest_field(manifest, "checksums", dict, "an object")
    for name in (TENSOR_NAME, LABELS_NAME):
        if name not in checksums or not isinstance(checksums[name], str):
            raise FormatError(f"manifest checksums must include a hex digest for {name!r}")
    if min(n_epochs, n_channels, n_samples) < 1:
        raise FormatError("manifest dimensions must be positive")

    tensor_path = path / TENSOR_NAME
    labels_path = path / LABELS_NAME
    if not tensor_path.is_file():
        raise FileNotFoundError(f"no {TENSOR_NAME} in {path}")
    if not labels_path.is_file():
        raise FileNotFoundError(f"no {LABELS_NAME} in {path}")

    tensor_bytes = tensor_path.read_bytes()
    expected_bytes = 4 * n_epochs * n_channels * n_samples
    if len(tensor_bytes) != expected_bytes:
        raise TensorSizeError(
            f"{tensor_path} holds {len(tensor_bytes)} bytes but the manifest "
            f"dimensions ({n_epochs} x {n_channels} x {n_samples} float32) "
            f"require {expected_bytes}"
        )
    if _sha256(tensor_bytes) != checksums[TENSOR_NAME]:
        raise ChecksumError(
            f"{tensor_path} does not match its manifest checksum; the file is corrupt"
        )

    labels_bytes = labels_path.read_bytes()
    if _sha256(labels_bytes) != checksums[LABELS_NAME]:
        raise ChecksumError(
            f"{labels_path} does not match its manifest checksum; the file is corrupt"
        )
    labels = labels_bytes.decode("utf-8").splitlines()
    if len(labels) != n_epochs:
        raise FormatError(
            f"{labels_path} holds {len(labels)} labels but the manifest declares "
            f"{n_epochs} epochs"
        )

    tensor = np.frombuffer(tensor_bytes, dtype="<f4").reshape(n_epochs, n_channels, n_samples)
    try:
        return EpochSet(
            tensor=tensor,
            labels=labels,
            class_ids=class_ids,
            channel_names=channel_names,
            sample_rate_hz=sample_rate,
            dataset_id=dataset_id,
            subject_id=subject_id,
            provenance=provenance,
        )
    except ValidationError as exc:
        raise FormatError(f"{path} holds an invalid epoch set: {exc}") from exc


def write_predictions(pred: PredictionSet, path: str | Path) -> Path:
    """Write per-trial probabilities as CSV.

    Header is ``trial_id,true_label`` followed by one column per class id;
    floats use shortest round-trip formatting, so read-after-write is exact.
    """
    path = Path(path)
    lines = ["trial_id,true_label," + ",".join(pred.class_ids)]
    for i, trial in enumerate(pred.trial_ids):
        row = [trial, pred.y_true[i]]
        row.extend(repr(float(p)) for p in pred.probs[i])
        lines.append(",".join(row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_predictions(path: str | Path, class_ids: Sequence[str] | None = None) -> PredictionSet:
    """Read a predictions CSV into a :class:`~miuq.metrics.PredictionSet`.

    The header must start with ``trial_id,true_label``; the remaining
    columns name the classes.  When ``class_ids`` is given the file's class
    columns must match it exactly (same names, same order).  Malformed rows
    raise :class:`~miuq.errors.FormatError` naming the row and column.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path} is empty") from None
        if len(header) < 4 or header[0] != "trial_id" or header[1] != "true_label":
            raise FormatError(
                f"{path} header must be 'trial_id,true_label,<class>,<class>,...', "
                f"got {','.join(header)!r}"
            )
        file_classes = tuple(header[2:])
        if class_ids is not None and tuple(class_ids) != file_classes:
            raise FormatError(
                f"{path} has class columns {file_classes}, expected {tuple(class_ids)}"
            )

        trial_ids, y_true, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 + len(file_classes):
                raise FormatError(
                    f"{path} row {lineno}: expected {2 + len(file_classes)} fields, got {len(row)}"
                )
            if not row[0]:
                raise FormatError(f"{path} row {lineno}: empty trial_id")
            if row[1] not in file_classes:
                raise FormatError(
                    f"{path} row {lineno}: true_label {row[1]!r} is not a class column"
                )
            probs = []
            for cls, cell in zip(file_classes, row[2:]):
                try:
                    probs.append(float(cell))
                except ValueError:
                    raise FormatError(
                        f"{path} row {lineno}: column {cls!r} holds {cell!r}, not a number"
                    ) from None
            trial_ids.append(row[0])
            y_true.append(row[1])
            rows.append(probs)
    if not rows:
        raise FormatError(f"{path} holds no prediction rows")
    try:
        return PredictionSet(file_classes, trial_ids, y_true, np.array(rows))
    except ValidationError as exc:
        raise FormatError(f"{path} holds invalid predictions: {exc}") from exc


def generate_synthetic(
    n_classes: int = 2,
    n_channels: int = 8,
    epochs_per_class: int = 60,
    n_samples: int = 500,
    sample_rate_hz: float = 250.0,
    separation: float = 3.0,
    jitter: float = 0.1,
    ambiguous_fraction: float = 0.0,
    seed: int = 0,
    dataset_id: str = "synthetic",
    subject_id: str = "s01",
) -> EpochSet:
    """Generate epochs whose class structure lives in channel covariance.

    Each class k gets a diagonal prototype covariance P_k = diag(exp(v_k))
    with v_k = (separation / sqrt(2)) e_k, which puts every pair of
    prototypes exactly ``separation`` apart in affine-invariant distance.
    Per epoch the prototype is perturbed along a random tangent direction
    of Frobenius norm ``jitter``, and the signal is white noise colored by
    a Cholesky factor of that covariance.

    ``ambiguous_fraction`` of each class's epochs are drawn from the
    geodesic midpoint between the class prototype and the next class's,
    producing trials that genuinely carry little class information; their
    labels keep the original class.
    """
    if n_classes < 2:
        raise ValidationError(f"need at least 2 classes, got {n_classes}")
    if n_classes > n_channels:
        raise ValidationError(
            f"{n_classes} classes need at least that many channels, got {n_channels}"
        )
    if epochs_per_class < 1:
        raise ValidationError("need at least one epoch per class")
    if n_samples <= n_channels:
        raise ValidationError(
            f"{n_samples} samples for {n_channels} channels; need more samples than channels"
        )
    if not 0.0 <= ambiguous_fraction <= 1.0:
        raise ValidationError(f"ambiguous_fraction must lie in [0, 1], got {ambiguous_fraction}")
    if separation < 0 or not math.isfinite(separation):
        raise ValidationError(f"separation must be finite and non-negative, got {separation}")
    if separation / math.sqrt(2) > 300.0:
        raise ValidationError(
            f"separation {separation} would overflow the prototype spectra; keep it below ~424"
        )
    if jitter < 0 or not math.isfinite(jitter):
        raise ValidationError(f"jitter must be finite and non-negative, got {jitter}")

    rng = np.random.default_rng(seed)
    prototypes = []
    for k in range(n_classes):
        v = np.zeros(n_channels)
        v[k] = separation / math.sqrt(2)
        prototypes.append(SpdMatrix(np.diag(np.exp(v))))

    n_ambiguous = round(ambiguous_fraction * epochs_per_class)
    class_ids = [f"class_{k}" for k in range(n_classes)]
    tensor = np.empty((n_classes * epochs_per_class, n_channels, n_samples), dtype=np.float64)
    labels = []
    i = 0
    for k in range(n_classes):
        midpoint = geodesic(prototypes[k], prototypes[(k + 1) % n_classes], 0.5)
        for e in range(epochs_per_class):
            # the last n_ambiguous epochs of each class sit halfway to the
            # next class's prototype and are near-uninformative by design
            base = midpoint if e >= epochs_per_class - n_ambiguous else prototypes[k]
            if jitter > 0.0:
                direction = rng.normal(size=(n_channels, n_channels))
                direction = 0.5 * (direction + direction.T)
                direction *= jitter / np.linalg.norm(direction, ord="fro")
                sqrt_base = matrix_fn(base, "sqrt")
                cov = sqrt_base @ matrix_fn(direction, "exp") @ sqrt_base
            else:
                cov = base.values
            chol = np.linalg.cholesky(0.5 * (cov + cov.T))
            tensor[i] = chol @ rng.standard_normal((n_channels, n_samples))
            labels.append(class_ids[k])
            i += 1

    return EpochSet(
        tensor=tensor,
        labels=labels,
        class_ids=class_ids,
        channel_names=[f"ch_{c}" for c in range(n_channels)],
        sample_rate_hz=sample_rate_hz,
        dataset_id=dataset_id,
        subject_id=subject_id,
        provenance={
            "generator": "synthetic",
            "seed": int(seed),
            "separation": float(separation),
            "jitter": float(jitter),
            "ambiguous_fraction": float(ambiguous_fraction),
            "epochs_per_class": int(epochs_per_class),
        },
    )
