"""Per-epoch feature extraction: covariance estimates and band-power features.

An epoch is one trial of multichannel signal, shaped (channels, samples).
Covariance matrices feed the distance-based classifiers; log-variance
features after spatial filtering feed the linear one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import PdViolationError, ValidationError
from .spd import SpdMatrix

LOG_POWER_FLOOR = 1e-20


@dataclass(frozen=True)
class Epoch:
    """One trial: a (channels, samples) signal block plus its class label."""

    data: np.ndarray
    label: str
    sample_rate_hz: float = field(default=0.0)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"epoch data must be 2-d (channels x samples), got shape {arr.shape}")
        n_ch, n_samp = arr.shape
        if n_ch < 1:
            raise ValidationError("epoch needs at least one channel")
        if n_samp <= n_ch:
            raise ValidationError(
                f"epoch has {n_samp} samples for {n_ch} channels; a full-rank "
                "covariance needs more samples than channels"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("epoch data contains non-finite values")
        if not isinstance(self.label, str) or not self.label:
            raise ValidationError(f"epoch label must be a non-empty string, got {self.label!r}")
        if self.sample_rate_hz < 0:
            raise ValidationError(f"sample rate must be non-negative, got {self.sample_rate_hz}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def _epoch_array(epoch: Union[Epoch, np.ndarray]) -> np.ndarray:
    if isinstance(epoch, Epoch):
        return epoch.data
    arr = np.asarray(epoch, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a (channels, samples) array, got shape {arr.shape}")
    if arr.shape[1] <= arr.shape[0]:
        raise ValidationError(
            f"need more samples than channels, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError("signal contains non-finite values")
    return arr


def estimate_covariance(epoch: Union[Epoch, np.ndarray], shrinkage: float = 0.0) -> SpdMatrix:
    """Sample channel covariance with optional shrinkage toward scaled identity.

    Channels are mean-centered, then C = X Xᵀ / (samples - 1).  With
    shrinkage a in [0, 1) the estimate becomes (1-a) C + a (tr C / n) I,
    which keeps the trace and pulls eigenvalues toward their mean.  Raises
    :class:`~miuq.errors.PdViolationError` if the result is not positive
    definite; increasing the shrinkage fixes rank-deficient input.
    """
    if not 0.0 <= shrinkage < 1.0:
        raise ValidationError(f"shrinkage must lie in [0, 1), got {shrinkage}")
    x = _epoch_array(epoch)
    n_ch, n_samp = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    cov = (centered @ centered.T) / (n_samp - 1)
    if shrinkage > 0.0:
        cov = (1.0 - shrinkage) * cov + shrinkage * (np.trace(cov) / n_ch) * np.eye(n_ch)
    try:
        return SpdMatrix(cov)
    except PdViolationError as exc:
        raise PdViolationError(
            f"covariance estimate is not positive definite ({exc}); "
            f"raise the shrinkage (currently {shrinkage}) or check for "
            "constant or duplicated channels"
        ) from exc


def csp_log_power(filters: np.ndarray, epoch: Union[Epoch, np.ndarray]) -> np.ndarray:
    """Log-variance of each spatially filtered signal.

    ``filters`` has one spatial filter per row; the feature vector is
    ``log(var(filters @ data))`` per row with unbiased variance.  Variances
    below 1e-20 are clamped there (with a warning) so silent channels
    cannot produce -inf features.
    """
    w = np.asarray(filters, dtype=np.float64)
    if w.ndim != 2:
        raise ValidationError(f"filters must be 2-d (filters x channels), got shape {w.shape}")
    x = _epoch_array(epoch)
    if w.shape[1] != x.shape[0]:
        raise ValidationError(
            f"filters expect {w.shape[1]} channels but the epoch has {x.shape[0]}"
        )
    projected = w @ x
    variances = projected.var(axis=1, ddof=1)
    if np.any(variances < LOG_POWER_FLOOR):
        warnings.warn(
            "spatially filtered signal has (near-)zero variance; clamping "
            f"before the log at {LOG_POWER_FLOOR:g}",
            stacklevel=2,
        )
        variances = np.maximum(variances, LOG_POWER_FLOOR)
    return np.log(variances)
