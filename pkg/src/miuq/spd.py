"""Linear algebra on symmetric positive-definite (SPD) matrices.

Everything here is built on the full symmetric eigendecomposition: the
matrices are small channel covariances (<= 64 x 64), so clarity and
determinism win over fancier matrix-function algorithms.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import ConvergenceError, DomainError, NumericalError, PdViolationError, ValidationError

SYMMETRY_ATOL = 1e-10
EIGVAL_FLOOR_RATIO = 1e-12

_MATRIX_FNS = {
    "sqrt": np.sqrt,
    "inv_sqrt": lambda w: 1.0 / np.sqrt(w),
    "log": np.log,
    "exp": np.exp,
}


class SpdMatrix:
    """A validated symmetric positive-definite matrix.

    Construction enforces symmetry (off-diagonal pairs within 1e-10) and
    strict positive-definiteness: the smallest eigenvalue must be positive
    and at least 1e-12 times the largest.  Values are stored read-only, so
    instances are immutable and safe to share between threads.
    """

    __slots__ = ("_values",)

    def __init__(self, values: np.ndarray | Sequence[Sequence[float]]):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"expected a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("matrix contains non-finite entries")
        asym = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
        if asym > SYMMETRY_ATOL:
            raise ValidationError(
                f"matrix is not symmetric (max off-diagonal mismatch {asym:.3e} > {SYMMETRY_ATOL})"
            )
        arr = 0.5 * (arr + arr.T)
        w = _eigvalsh(arr)
        w_min, w_max = w[0], w[-1]
        if w_min <= 0.0 or w_min < EIGVAL_FLOOR_RATIO * w_max:
            raise PdViolationError(
                f"matrix is not positive definite enough: min eigenvalue {w_min:.3e}, "
                f"max eigenvalue {w_max:.3e}"
            )
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        """The matrix entries as a read-only (dim, dim) float64 array."""
        return self._values

    @property
    def dim(self) -> int:
        return self._values.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is not None and dtype != self._values.dtype:
            return self._values.astype(dtype)
        if copy:
            return self._values.copy()
        return self._values

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim})"


def _eigvalsh(arr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigenvalue computation failed for a {arr.shape[0]}x{arr.shape[1]} matrix: {exc}"
        ) from exc


def _as_matrix(m: SpdMatrix | np.ndarray) -> np.ndarray:
    if isinstance(m, SpdMatrix):
        return m.values
    return SpdMatrix(m).values


def sym_eig(m: SpdMatrix | np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition with ascending eigenvalues.

    Accepts an :class:`SpdMatrix` or any symmetric array (within the 1e-10
    tolerance).  Returns ``(eigenvalues, eigenvectors)`` such that
    ``V @ diag(w) @ V.T`` reconstructs the input.
    """
    if isinstance(m, SpdMatrix):
        arr = m.values
    else:
        arr = np.asarray(m, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"expected a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("matrix contains non-finite entries")
        asym = np.max(np.abs(arr - arr.T)) if arr.size else 0.0
        if asym > SYMMETRY_ATOL:
            raise ValidationError(
                f"matrix is not symmetric (max off-diagonal mismatch {asym:.3e})"
            )
        arr = 0.5 * (arr + arr.T)
    try:
        w, v = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as exc:
        w_probe = "unavailable"
        raise NumericalError(
            f"symmetric eigensolver failed to converge on a {arr.shape[0]}x{arr.shape[0]} "
            f"matrix (eigenvalue estimate {w_probe}): {exc}"
        ) from exc
    return w, v


def matrix_fn(m: SpdMatrix | np.ndarray, fn: str) -> np.ndarray:
    """Apply ``sqrt``, ``inv_sqrt``, ``log`` or ``exp`` to a symmetric matrix.

    The function acts on the eigenvalues while the eigenvectors are kept, so
    ``exp(log(A)) == A`` up to round-off.  ``sqrt``, ``inv_sqrt`` and ``log``
    require a positive-definite input; ``exp`` accepts any symmetric matrix.
    """
    if fn not in _MATRIX_FNS:
        raise ValidationError(f"unknown matrix function {fn!r}; expected one of {sorted(_MATRIX_FNS)}")
    w, v = sym_eig(m)
    if fn != "exp" and w[0] <= 0.0:
        raise DomainError(
            f"matrix function {fn!r} requires positive eigenvalues; smallest is {w[0]:.3e}"
        )
    fw = _MATRIX_FNS[fn](w)
    out = (v * fw) @ v.T
    return 0.5 * (out + out.T)


def riemannian_distance(a: SpdMatrix | np.ndarray, b: SpdMatrix | np.ndarray) -> float:
    """Affine-invariant distance ||log(A^{-1/2} B A^{-1/2})||_F."""
    av = _as_matrix(a)
    bv = _as_matrix(b)
    if av.shape != bv.shape:
        raise ValidationError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    ia = matrix_fn(a, "inv_sqrt")
    whitened = ia @ bv @ ia
    w = _eigvalsh(0.5 * (whitened + whitened.T))
    if w[0] <= 0.0:
        raise DomainError(
            f"whitened matrix has non-positive eigenvalue {w[0]:.3e}; inputs are not both SPD"
        )
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def geodesic(a: SpdMatrix | np.ndarray, b: SpdMatrix | np.ndarray, t: float) -> SpdMatrix:
    """Point at parameter ``t`` on the geodesic from ``a`` (t=0) to ``b`` (t=1).

    Computed as A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}.
    """
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"geodesic parameter must lie in [0, 1], got {t}")
    av = _as_matrix(a)
    bv = _as_matrix(b)
    if av.shape != bv.shape:
        raise ValidationError(f"dimension mismatch: {av.shape[0]} vs {bv.shape[0]}")
    sa = matrix_fn(a, "sqrt")
    ia = matrix_fn(a, "inv_sqrt")
    whitened = ia @ bv @ ia
    w, v = sym_eig(whitened)
    if w[0] <= 0.0:
        raise DomainError(f"whitened matrix has non-positive eigenvalue {w[0]:.3e}")
    powered = (v * w**t) @ v.T
    out = sa @ powered @ sa
    return SpdMatrix(0.5 * (out + out.T))


def frechet_mean(
    ms: Iterable[SpdMatrix | np.ndarray], tol: float = 1e-9, max_iter: int = 50
) -> SpdMatrix:
    """Fréchet (Karcher) mean of SPD matrices under the affine-invariant metric.

    Fixed-point iteration M <- M^{1/2} exp(mean_i log(M^{-1/2} A_i M^{-1/2})) M^{1/2},
    started from the arithmetic mean and stopped once the Frobenius norm of
    the tangent-space mean drops below ``tol``.  Raises
    :class:`~miuq.errors.ConvergenceError` after ``max_iter`` iterations.
    """
    mats = [_as_matrix(m) for m in ms]
    if not mats:
        raise ValidationError("frechet_mean requires at least one matrix")
    dim = mats[0].shape[0]
    for m in mats[1:]:
        if m.shape[0] != dim:
            raise ValidationError(f"dimension mismatch: {m.shape[0]} vs {dim}")
    stack = np.stack(mats)
    current = stack.mean(axis=0)
    residual = np.inf
    for _ in range(max_iter):
        w, v = sym_eig(current)
        sqrt_c = (v * np.sqrt(w)) @ v.T
        inv_sqrt_c = (v / np.sqrt(w)) @ v.T
        whitened = inv_sqrt_c @ stack @ inv_sqrt_c
        tangent = np.zeros((dim, dim))
        for mat in whitened:
            tangent += matrix_fn(0.5 * (mat + mat.T), "log")
        tangent /= len(mats)
        residual = float(np.linalg.norm(tangent, ord="fro"))
        if residual < tol:
            return SpdMatrix(current)
        current = sqrt_c @ matrix_fn(tangent, "exp") @ sqrt_c
        current = 0.5 * (current + current.T)
    raise ConvergenceError(
        f"Fréchet mean did not converge within {max_iter} iterations", residual
    )
