"""Zero-phase band-pass filtering of epoch tensors.

The band filter is a Butterworth IIR design applied forward and backward
(two passes), which squares the magnitude response and cancels the phase
response.  Filtering is non-causal by construction and meant for offline
epochs, not streaming signal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .data_io import EpochSet
from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class BandpassSpec:
    """Pass band, design order, and the sample rate the design targets.

    ``order`` is the Butterworth design order (even, at least 2); the
    band edges must satisfy 0 < low < high < sample_rate / 2.
    """

    sample_rate_hz: float
    low_hz: float = 7.5
    high_hz: float = 30.0
    order: int = 4

    def __post_init__(self):
        if not (isinstance(self.order, int) and not isinstance(self.order, bool)):
            raise ValidationError(f"filter order must be an integer, got {self.order!r}")
        if self.order < 2 or self.order % 2:
            raise ValidationError(f"filter order must be even and at least 2, got {self.order}")
        for name in ("sample_rate_hz", "low_hz", "high_hz"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValidationError(f"{name} must be a finite number, got {value!r}")
        if self.sample_rate_hz <= 0:
            raise ValidationError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not 0 < self.low_hz < self.high_hz:
            raise ValidationError(
                f"band edges must satisfy 0 < low < high, got {self.low_hz} and {self.high_hz}"
            )
        if self.high_hz >= self.sample_rate_hz / 2:
            raise ValidationError(
                f"high edge {self.high_hz} Hz must stay below the Nyquist rate "
                f"{self.sample_rate_hz / 2} Hz"
            )

    @property
    def pad_samples(self) -> int:
        """Edge padding per side used by the zero-phase pass."""
        return 3 * (self.order + 1)


@dataclass(frozen=True)
class BandpassFilter:
    """A designed filter: second-order sections plus the parameters they realize."""

    spec: BandpassSpec
    sos: np.ndarray


def design_bandpass(spec: BandpassSpec) -> BandpassFilter:
    """Design the Butterworth band-pass for a spec and verify stability."""
    sos = butter(
        spec.order,
        [spec.low_hz, spec.high_hz],
        btype="bandpass",
        output="sos",
        fs=spec.sample_rate_hz,
    )
    worst = 0.0
    for section in sos:
        poles = np.roots(section[3:])
        worst = max(worst, float(np.max(np.abs(poles))))
    if worst >= 1.0:
        raise NumericalError(
            f"designed filter is unstable (pole magnitude {worst:.6f}); "
            "the band is too narrow or too close to Nyquist for this order"
        )
    sos = np.array(sos, dtype=np.float64)
    sos.flags.writeable = False
    return BandpassFilter(spec=spec, sos=sos)


def filtfilt(filt: BandpassFilter, signal: np.ndarray) -> np.ndarray:
    """Forward-backward filtering along the last axis.

    Edges are extended by odd reflection over ``spec.pad_samples`` points
    per side, so the signal must be longer than that.  Output is float64
    with the input shape; the phase response is identically zero.
    """
    arr = np.asarray(signal, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] == 0:
        raise ValidationError("signal must have a non-empty time axis")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("signal contains non-finite values")
    pad = filt.spec.pad_samples
    if arr.shape[-1] <= pad:
        raise ValidationError(
            f"signal length {arr.shape[-1]} must exceed the edge padding of "
            f"{pad} samples for an order-{filt.spec.order} design"
        )
    # scipy's sos kernel rejects read-only coefficient buffers
    return sosfiltfilt(np.array(filt.sos), arr, axis=-1, padtype="odd", padlen=pad)


def preprocess_epochs(epochs: EpochSet, spec: BandpassSpec | None = None) -> EpochSet:
    """Band-pass every epoch of a set, recording the band in provenance.

    With ``spec=None`` the default band is designed at the set's sample
    rate.  A set that already carries a ``bandpass`` provenance entry is
    filtered again, with a warning, since repeating an IIR band-pass
    narrows the effective band.
    """
    if spec is None:
        spec = BandpassSpec(sample_rate_hz=epochs.sample_rate_hz)
    if not math.isclose(spec.sample_rate_hz, epochs.sample_rate_hz, rel_tol=1e-9):
        raise ValidationError(
            f"filter was designed for {spec.sample_rate_hz} Hz but the epoch "
            f"set is sampled at {epochs.sample_rate_hz} Hz"
        )
    if "bandpass" in epochs.provenance:
        warnings.warn(
            f"epoch set {epochs.dataset_id}/{epochs.subject_id} is already "
            "band-passed; filtering it again",
            stacklevel=2,
        )
    filt = design_bandpass(spec)
    filtered = filtfilt(filt, epochs.tensor)
    return epochs.with_tensor(
        filtered,
        {
            "bandpass": {
                "low_hz": spec.low_hz,
                "high_hz": spec.high_hz,
                "order": spec.order,
                "zero_phase": True,
            }
        },
    )
