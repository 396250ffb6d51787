"""Export orchestration: download, epoch, canonicalize, write.

``export_spec`` is pure orchestration and testable offline; all
contact with the download stack lives in ``load_subject`` and
``available_subjects``, which import moabb and mne lazily so the
package works (list datasets, validate specs, write stub data) without
them installed.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .datasets import canonical_label, dataset_info
from .errors import ExportError, MissingDependencyError
from .formats import write_epochset_dir


@dataclass(frozen=True)
class ExportSpec:
    """What to export: dataset key, subject selection, destination."""

    dataset: str
    out_dir: Path
    subjects: tuple | None = None  # None means every subject upstream
    overwrite: bool = False

    def __post_init__(self):
        dataset_info(self.dataset)  # validates the key
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.subjects is not None:
            subjects = tuple(int(s) for s in self.subjects)
            if not subjects:
                raise ExportError("subject list is empty; omit it to export every subject")
            if any(s < 1 for s in subjects):
                raise ExportError(f"subject numbers start at 1, got {sorted(subjects)}")
            if len(set(subjects)) != len(subjects):
                raise ExportError(f"duplicate subject numbers in {sorted(subjects)}")
            object.__setattr__(self, "subjects", subjects)


@dataclass
class SubjectEpochs:
    """One subject's raw epochs as delivered by a loader."""

    tensor: np.ndarray  # (n_epochs, n_channels, n_samples), native units
    labels: list  # upstream event names, one per epoch
    channel_names: list
    sample_rate_hz: float
    interval: tuple  # cue-relative (tmin, tmax) seconds used for epoching
    upstream: dict = field(default_factory=dict)  # versions, source names


@dataclass
class ExportResult:
    written: list  # paths of exported epoch-set directories
    failures: list  # dicts: subject, error


def _moabb_modules():
    try:
        import mne
        import moabb
        import moabb.datasets
    except ImportError as exc:
        raise MissingDependencyError(
            "downloading datasets needs the optional moabb and mne packages; "
            "install them with: pip install 'miuq-export[moabb]'"
        ) from exc
    return moabb, mne


def _upstream_dataset(key: str):
    moabb_mod, _ = _moabb_modules()
    info = dataset_info(key)
    return getattr(moabb_mod.datasets, info.moabb_class)()


def available_subjects(key: str) -> list:
    """Subject numbers the upstream dataset declares."""
    return [int(s) for s in _upstream_dataset(key).subject_list]


def load_subject(key: str, subject: int) -> SubjectEpochs:
    """Download one subject and cut raw, unfiltered, cue-locked epochs.

    Epoching uses the dataset's own cue-relative interval and native
    sampling rate; no filtering or resampling happens here, so the
    consumer's preprocessing is the only signal processing in the
    measured pipeline.
    """
    moabb_mod, mne = _moabb_modules()
    dataset = _upstream_dataset(key)
    tmin, tmax = (float(v) for v in dataset.interval)

    sessions = dataset.get_data(subjects=[subject])[subject]
    pieces = []
    labels = []
    channel_names = None
    sfreq = None
    for session_name in sorted(sessions):
        runs = sessions[session_name]
        for run_name in sorted(runs):
            raw = runs[run_name]
            events, event_id = _run_events(mne, raw, dataset.event_id)
            if events.size == 0:
                continue
            picks = mne.pick_types(raw.info, eeg=True, stim=False, eog=False, misc=False)
            epochs = mne.Epochs(
                raw,
                events,
                event_id=event_id,
                tmin=tmin,
                tmax=tmax,
                baseline=None,
                preload=True,
                picks=picks,
                verbose="ERROR",
            )
            data = epochs.get_data()
            if data.shape[0] == 0:
                continue
            run_channels = [epochs.ch_names[i] for i in range(data.shape[1])]
            if channel_names is None:
                channel_names = run_channels
                sfreq = float(epochs.info["sfreq"])
            elif run_channels != channel_names:
                raise ExportError(
                    f"channel layout changed between runs of subject {subject}: "
                    f"{channel_names} vs {run_channels}"
                )
            code_to_name = {code: name for name, code in event_id.items()}
            pieces.append(data)
            labels.extend(code_to_name[int(c)] for c in epochs.events[:, 2])
    if not pieces:
        raise ExportError(f"subject {subject} of {key!r} yielded no epochs")
    upstream = {
        "dataset_class": type(dataset).__name__,
        "moabb_version": getattr(moabb_mod, "__version__", "unknown"),
        "mne_version": getattr(mne, "__version__", "unknown"),
    }
    return SubjectEpochs(
        tensor=np.concatenate(pieces, axis=0),
        labels=labels,
        channel_names=channel_names,
        sample_rate_hz=sfreq,
        interval=(tmin, tmax),
        upstream=upstream,
    )


def _run_events(mne, raw, dataset_event_id):
    """Cue events of one run, from annotations or a stim channel.

    Annotation names win when they match the dataset's declared events;
    otherwise the stim channel is decoded with the dataset's own
    name-to-code map. Returns filtered events plus the name map that
    covers them.
    """
    events, ann_id = mne.events_from_annotations(raw, verbose="ERROR")
    kept = {name: code for name, code in ann_id.items() if name in dataset_event_id}
    if kept:
        mask = np.isin(events[:, 2], list(kept.values()))
        return events[mask], kept
    if mne.pick_types(raw.info, stim=True).size:
        events = mne.find_events(raw, verbose="ERROR")
        mask = np.isin(events[:, 2], list(dataset_event_id.values()))
        return events[mask], dict(dataset_event_id)
    return np.empty((0, 3), dtype=int), {}


def export_spec(spec: ExportSpec, loader=None, subject_lister=None) -> ExportResult:
    """Export every requested subject; failures are per subject.

    A subject that cannot be downloaded or carries an unknown event
    label is recorded under ``failures`` and the rest continue, since
    multi-gigabyte downloads should not restart because one subject's
    hosting hiccuped. Raises when nothing could be exported, and
    immediately when the optional download stack itself is missing.
    """
    loader = loader if loader is not None else load_subject
    subject_lister = subject_lister if subject_lister is not None else available_subjects
    info = dataset_info(spec.dataset)
    subjects = list(spec.subjects) if spec.subjects is not None else subject_lister(spec.dataset)
    if not subjects:
        raise ExportError(f"dataset {spec.dataset!r} lists no subjects")

    written = []
    failures = []
    for subject in subjects:
        try:
            written.append(_export_one(spec, info, subject, loader))
        except MissingDependencyError:
            # no subject can succeed without the download stack
            raise
        except (ExportError, OSError) as exc:
            failures.append({"subject": int(subject), "error": str(exc)})
    if not written:
        raise ExportError(
            f"no subject of {spec.dataset!r} could be exported; "
            f"first error: {failures[0]['error']}"
        )
    return ExportResult(written=written, failures=failures)


def _export_one(spec: ExportSpec, info, subject: int, loader) -> Path:
    data = loader(spec.dataset, subject)
    labels = [canonical_label(name) for name in data.labels]
    declared = set(info.classes)
    for label in labels:
        if label not in declared:
            raise ExportError(
                f"subject {subject} carries label {label!r}, which {info.key!r} "
                f"does not declare (classes: {list(info.classes)})"
            )
    provenance = {
        "exporter": {
            "name": "miuq-export",
            "version": __version__,
            "dataset_key": info.key,
            "upstream_dataset": info.moabb_class,
            "interval_seconds": [float(v) for v in data.interval],
            "epoching": "upstream default cue-relative interval, no filtering or resampling",
            "download_date": _dt.date.today().isoformat(),
            **{f"upstream_{k}": v for k, v in sorted(data.upstream.items())},
        }
    }
    subject_id = f"s{int(subject):02d}"
    return write_epochset_dir(
        spec.out_dir / subject_id,
        tensor=data.tensor,
        labels=labels,
        class_ids=list(info.classes),
        channel_names=data.channel_names,
        sample_rate_hz=data.sample_rate_hz,
        dataset_id=info.key,
        subject_id=subject_id,
        provenance=provenance,
        overwrite=spec.overwrite,
    )
