"""Uncertainty-aware benchmarking of covariance-based EEG decoders.

The package covers the full loop: loading or synthesizing epoched
multichannel recordings, band-pass filtering, covariance features,
geodesic-distance and spatial-filter classifiers, temperature scaling,
calibration metrics, and reproducible per-subject benchmark reports.
"""

from .calibration import TemperatureFit, apply_temperature, fit_temperature
from .classifiers import (
    CspLdaModel,
    MdrmModel,
    csp_filters,
    csp_lda_fit,
    load_model,
    mdrm_fit,
    predict_labels,
    predict_proba,
    predictions_for,
    save_model,
    with_temperature,
)
from .data_io import (
    EpochSet,
    generate_synthetic,
    read_epochset,
    read_predictions,
    write_epochset,
    write_predictions,
)
from .errors import (
    ChecksumError,
    ConvergenceError,
    DomainError,
    FormatError,
    FormatVersionError,
    MiuqError,
    NumericalError,
    PdViolationError,
    TensorSizeError,
    ValidationError,
)
from .features import Epoch, csp_log_power, estimate_covariance
from .metrics import (
    CalibrationBins,
    PredictionSet,
    RejectionCurve,
    accuracy,
    brier,
    compute_bins,
    ece,
    nce,
    rejection_curve,
)
from .pipeline import (
    MODEL_NAMES,
    RunConfig,
    SubjectResult,
    evaluate_external,
    run_benchmark,
    run_subject,
    split_within_subject,
)
from .signal import BandpassSpec, design_bandpass, filtfilt, preprocess_epochs
from .spd import SpdMatrix, frechet_mean, geodesic, matrix_fn, riemannian_distance

__version__ = "0.1.0"

__all__ = [
    "BandpassSpec",
    "CalibrationBins",
    "ChecksumError",
    "ConvergenceError",
    "CspLdaModel",
    "DomainError",
    "Epoch",
    "EpochSet",
    "FormatError",
    "FormatVersionError",
    "MODEL_NAMES",
    "MdrmModel",
    "MiuqError",
    "NumericalError",
    "PdViolationError",
    "PredictionSet",
    "RejectionCurve",
    "RunConfig",
    "SpdMatrix",
    "SubjectResult",
    "TemperatureFit",
    "TensorSizeError",
    "ValidationError",
    "accuracy",
    "apply_temperature",
    "brier",
    "compute_bins",
    "csp_filters",
    "csp_lda_fit",
    "csp_log_power",
    "design_bandpass",
    "ece",
    "estimate_covariance",
    "evaluate_external",
    "filtfilt",
    "fit_temperature",
    "frechet_mean",
    "generate_synthetic",
    "geodesic",
    "load_model",
    "matrix_fn",
    "mdrm_fit",
    "nce",
    "predict_labels",
    "predict_proba",
    "predictions_for",
    "read_epochset",
    "read_predictions",
    "rejection_curve",
    "riemannian_distance",
    "run_benchmark",
    "run_subject",
    "save_model",
    "split_within_subject",
    "with_temperature",
    "write_epochset",
    "write_predictions",
]
