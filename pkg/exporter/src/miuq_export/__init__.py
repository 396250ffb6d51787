"""Export public motor-imagery EEG datasets into epoch-set directories.

The heavy download stack (moabb, mne) is optional and imported lazily;
listing datasets, validating export specs, and writing the on-disk
format all work without it.
"""

__version__ = "0.1.0"

from .datasets import CANONICAL_LABELS, DATASETS, DatasetInfo, canonical_label, dataset_info
from .errors import ExportError, MissingDependencyError
from .export import ExportResult, ExportSpec, SubjectEpochs, export_spec, load_subject
from .formats import write_epochset_dir

__all__ = [
    "CANONICAL_LABELS",
    "DATASETS",
    "DatasetInfo",
    "ExportError",
    "ExportResult",
    "ExportSpec",
    "MissingDependencyError",
    "SubjectEpochs",
    "canonical_label",
    "dataset_info",
    "export_spec",
    "load_subject",
    "write_epochset_dir",
]
