"""Writer for the epoch-set directory format.

The format is the contract between this exporter and the benchmark
package that consumes the data, so it is implemented here from the
format description rather than imported: a directory holding
``manifest.json`` (sorted keys, two-space indent, SHA-256 checksums),
``tensor.f32`` (little-endian float32, C order, epoch-major), and
``labels.txt`` (one label per line). The consumer's reader is the
oracle the test suite validates against.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ExportError

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
TENSOR_NAME = "tensor.f32"
LABELS_NAME = "labels.txt"


def _sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def _atomic_write(path: Path, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_epochset_dir(
    out_dir,
    tensor,
    labels,
    class_ids,
    channel_names,
    sample_rate_hz,
    dataset_id,
    subject_id,
    provenance,
    overwrite: bool = False,
) -> Path:
    """Write one subject's epochs as an epoch-set directory.

    Validates the pieces against the format's invariants before
    touching the filesystem; a half-valid export is worse than none.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim != 3:
        raise ExportError(f"tensor must be (epochs, channels, samples), got shape {tensor.shape}")
    n_epochs, n_channels, n_samples = tensor.shape
    if n_epochs < 1:
        raise ExportError("tensor holds no epochs")
    if n_samples <= n_channels:
        raise ExportError(
            f"each epoch needs more samples than channels, got {n_channels} channels "
            f"x {n_samples} samples"
        )
    if not np.all(np.isfinite(tensor)):
        raise ExportError("tensor contains non-finite values")

    labels = [str(l) for l in labels]
    class_ids = [str(c) for c in class_ids]
    if len(labels) != n_epochs:
        raise ExportError(f"{len(labels)} labels for {n_epochs} epochs")
    if len(class_ids) < 2 or len(set(class_ids)) != len(class_ids):
        raise ExportError("class_ids must be at least 2 unique labels")
    vocabulary = set(class_ids)
    for i, label in enumerate(labels):
        if label not in vocabulary:
            raise ExportError(f"label {label!r} of epoch {i} is not in class_ids {class_ids}")

    channel_names = [str(c) for c in channel_names]
    if len(channel_names) != n_channels:
        raise ExportError(f"{len(channel_names)} channel names for {n_channels} channels")
    sample_rate_hz = float(sample_rate_hz)
    if not math.isfinite(sample_rate_hz) or sample_rate_hz <= 0:
        raise ExportError(f"sample rate must be a positive number, got {sample_rate_hz}")
    try:
        provenance = json.loads(json.dumps(provenance))
    except (TypeError, ValueError) as exc:
        raise ExportError(f"provenance is not JSON-serializable: {exc}") from exc

    out_dir = Path(out_dir)
    if out_dir.exists():
        if not overwrite:
            raise FileExistsError(f"{out_dir} already exists; pass overwrite=True to replace it")
        if not out_dir.is_dir():
            raise NotADirectoryError(f"{out_dir} exists and is not a directory")
    out_dir.mkdir(parents=True, exist_ok=True)

    tensor_bytes = tensor.astype("<f4").tobytes(order="C")
    labels_bytes = ("\n".join(labels) + "\n").encode("utf-8")
    manifest = {
        "format_version": FORMAT_VERSION,
        "dataset_id": str(dataset_id),
        "subject_id": str(subject_id),
        "sample_rate_hz": sample_rate_hz,
        "channel_names": channel_names,
        "class_ids": class_ids,
        "n_epochs": n_epochs,
        "n_channels": n_channels,
        "n_samples": n_samples,
        "provenance": provenance,
        "checksums": {
            TENSOR_NAME: _sha256(tensor_bytes),
            LABELS_NAME: _sha256(labels_bytes),
        },
    }
    manifest_bytes = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")

    _atomic_write(out_dir / TENSOR_NAME, tensor_bytes)
    _atomic_write(out_dir / LABELS_NAME, labels_bytes)
    _atomic_write(out_dir / MANIFEST_NAME, manifest_bytes)
    return out_dir
