"""Temperature scaling of decision scores into calibrated probabilities.

A single positive temperature divides every score before the softmax.
Temperatures above 1 flatten the probabilities, temperatures below 1
sharpen them; the argmax never changes.  Fitting searches a log-spaced
grid and refines around the best point, minimising the calibration error
of the resulting probabilities on the data it is given (typically the
training split, so no extra validation data is consumed).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import ValidationError
from .metrics import DEFAULT_N_BINS, binned_calibration, ece_from_bins

GRID_SIZE = 200
GRID_LOG10_SPAN = 2.0
REFINE_REL_WIDTH = 1e-3
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def apply_temperature(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax of ``scores / temperature`` along the last axis.

    Scores are shifted by their row maximum before exponentiation, so any
    finite score magnitude is safe.  Raises for non-positive or non-finite
    temperatures and for non-finite scores.
    """
    if not np.isfinite(temperature) or temperature <= 0.0:
        raise ValidationError(f"temperature must be a positive finite number, got {temperature}")
    arr = np.asarray(scores, dtype=np.float64)
    if arr.shape[-1] < 2:
        raise ValidationError(f"need scores for at least 2 classes, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("scores contain non-finite values")
    z = arr / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class TemperatureFit:
    """Result of a temperature search.

    ``objective_value`` is the objective at ``temperature`` and
    ``baseline_value`` the objective at temperature 1; the fitted value is
    never worse than the baseline.  ``grid_temperatures`` and
    ``grid_values`` record the coarse search for inspection.
    """

    temperature: float
    objective: str
    objective_value: float
    baseline_value: float
    grid_temperatures: np.ndarray
    grid_values: np.ndarray


def _make_objective(
    scores: np.ndarray, true_index: np.ndarray, n_bins: int, objective: str
) -> Callable[[float], float]:
    if objective == "ece":

        def fn(t: float) -> float:
            probs = apply_temperature(scores, t)
            conf = probs.max(axis=1)
            correct = probs.argmax(axis=1) == true_index
            return ece_from_bins(binned_calibration(conf, correct, n_bins))

    elif objective == "nll":
        rows = np.arange(scores.shape[0])

        def fn(t: float) -> float:
            z = scores / t
            return float(np.mean(logsumexp(z, axis=1) - z[rows, true_index]))

    else:
        raise ValidationError(f"unknown objective {objective!r}; expected 'ece' or 'nll'")
    return fn


def default_grid() -> np.ndarray:
    """Log-spaced temperature grid over [0.01, 100] containing exactly 1.0."""
    grid = np.logspace(-GRID_LOG10_SPAN, GRID_LOG10_SPAN, GRID_SIZE)
    grid[np.argmin(np.abs(grid - 1.0))] = 1.0
    return grid


def fit_temperature(
    scores: np.ndarray,
    true_index: np.ndarray,
    n_bins: int = DEFAULT_N_BINS,
    objective: str = "ece",
    grid: np.ndarray | None = None,
) -> TemperatureFit:
    """Search for the temperature minimising a calibration objective.

    ``scores`` is (n_trials, n_classes); ``true_index`` holds column indices
    of the true classes.  The search scans a log-spaced grid, then narrows
    around the best grid point by golden-section steps, keeping the best
    value seen anywhere.  If no candidate strictly improves on temperature
    1.0, the fit returns exactly 1.0, so scaling can never hurt the
    objective it optimises.
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"scores must be 2-d (trials x classes), got shape {arr.shape}")
    if arr.shape[1] < 2:
        raise ValidationError(f"need scores for at least 2 classes, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("scores contain non-finite values")
    idx = np.asarray(true_index)
    if idx.shape != (arr.shape[0],):
        raise ValidationError(
            f"true_index has shape {idx.shape}, expected ({arr.shape[0]},)"
        )
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValidationError("true_index must hold integer class columns")
    if idx.size and (idx.min() < 0 or idx.max() >= arr.shape[1]):
        raise ValidationError("true_index entries must index score columns")
    if np.unique(idx).size < 2:
        raise ValidationError(
            "temperature fitting needs trials from at least 2 classes; "
            "with one class the objective is degenerate"
        )
    if arr.shape[0] < n_bins:
        warnings.warn(
            f"fitting a temperature on {arr.shape[0]} trials with {n_bins} bins; "
            "the objective will be noisy",
            stacklevel=2,
        )

    if grid is None:
        grid_arr = default_grid()
    else:
        grid_arr = np.asarray(grid, dtype=np.float64)
        if grid_arr.ndim != 1 or grid_arr.size < 2:
            raise ValidationError("grid must be a 1-d array with at least 2 temperatures")
        if grid_arr.min() <= 0 or not np.all(np.isfinite(grid_arr)):
            raise ValidationError("grid temperatures must be positive and finite")
        if np.any(np.diff(grid_arr) <= 0):
            raise ValidationError("grid temperatures must be strictly increasing")

    fn = _make_objective(arr, idx, n_bins, objective)
    grid_values = np.array([fn(t) for t in grid_arr])

    best_i = int(np.argmin(grid_values))
    best_t = float(grid_arr[best_i])
    best_v = float(grid_values[best_i])
    flat = float(np.ptp(grid_values)) < 1e-12
    if flat:
        warnings.warn(
            "calibration objective is flat across the whole temperature grid; "
            "keeping temperature 1.0",
            stacklevel=2,
        )
    elif best_i in (0, grid_arr.size - 1):
        warnings.warn(
            f"best temperature {best_t:.4g} sits on the grid boundary; "
            "the optimum may lie outside the searched range",
            stacklevel=2,
        )

    # golden-section narrowing in log-space around the best grid point;
    # the objective can have flat steps, so track the best value seen
    # rather than trusting unimodality
    lo = np.log(grid_arr[max(best_i - 1, 0)])
    hi = np.log(grid_arr[min(best_i + 1, grid_arr.size - 1)])
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(float(np.exp(c))), fn(float(np.exp(d)))
    for cand, val in ((c, fc), (d, fd)):
        if val < best_v:
            best_v, best_t = val, float(np.exp(cand))
    while (b - a) > np.log1p(REFINE_REL_WIDTH):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(float(np.exp(c)))
            if fc < best_v:
                best_v, best_t = fc, float(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(float(np.exp(d)))
            if fd < best_v:
                best_v, best_t = fd, float(np.exp(d))

    if 1.0 in grid_arr:
        baseline = float(grid_values[np.nonzero(grid_arr == 1.0)[0][0]])
    else:
        baseline = fn(1.0)
    if not best_v < baseline:
        best_t, best_v = 1.0, baseline

    grid_arr = grid_arr.copy()
    grid_arr.flags.writeable = False
    grid_values.flags.writeable = False
    return TemperatureFit(
        temperature=best_t,
        objective=objective,
        objective_value=best_v,
        baseline_value=baseline,
        grid_temperatures=grid_arr,
        grid_values=grid_values,
    )
