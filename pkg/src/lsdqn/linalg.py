"""Dense real linear algebra for the regularized least-squares solves.

Everything here works on float64 numpy arrays. Accumulation of the empirical
systems elsewhere in the package is double precision as well; the batch
solves are the numerically delicate part of the pipeline (unregularized
feature Gram matrices are routinely ill-conditioned), so no lower-precision
shortcuts are taken.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

# Relative tolerance used to accept "symmetric up to roundoff" inputs.
_SYMMETRY_RTOL = 1e-9


def _as_matrix(a: np.ndarray, name: str = "a") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _check_symmetric(a: np.ndarray, name: str = "a") -> np.ndarray:
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    skew = float(np.abs(a - a.T).max(initial=0.0))
    if skew > _SYMMETRY_RTOL * scale:
        raise ValueError(
            f"{name} is not symmetric (max asymmetry {skew:.3e} vs scale {scale:.3e})"
        )
    # Average away float-level asymmetry before factorizing.
    return 0.5 * (a + a.T)


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == a, for symmetric positive-definite a.

    Raises NotPositiveDefinite as soon as a pivot is <= 0; for the empirical
    Gram matrices solved here that is the signature of an ill-conditioned,
    unregularized system rather than a programming error, so callers may
    catch it and fall back or re-regularize.
    """
    a = _check_symmetric(_as_matrix(a))
    n = a.shape[0]
    lower = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - lower[j, :j] @ lower[j, :j]
        if not d > 0.0:  # catches d <= 0 and NaN
            raise NotPositiveDefinite(f"pivot {d:.6e} at index {j}")
        lower[j, j] = np.sqrt(d)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def _forward_sub(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.zeros_like(b)
    for i in range(b.shape[0]):
        x[i] = (b[i] - lower[i, :i] @ x[:i]) / lower[i, i]
    return x


def _backward_sub_transpose(lower: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Solves lower.T @ x = y.
    n = y.shape[0]
    x = np.zeros_like(y)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - lower[i + 1 :, i] @ x[i + 1 :]) / lower[i, i]
    return x


def solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric positive-definite a via Cholesky."""
    lower = cholesky(a)
    return _backward_sub_transpose(lower, _forward_sub(lower, np.asarray(b, dtype=np.float64)))


def solve_regularized(
    a: np.ndarray,
    b: np.ndarray,
    lam: float,
    w_prior: np.ndarray,
) -> np.ndarray:
    """Solve (a + lam*I) w = b + lam*w_prior for symmetric a.

    lam = 0 is allowed only when a itself is positive definite; a singular
    unregularized system propagates NotPositiveDefinite from the
    factorization. The returned w satisfies
    ||(a + lam*I) w - (b + lam*w_prior)|| <= 1e-8 * (1 + ||b||).
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    w_prior = np.asarray(w_prior, dtype=np.float64)
    n = a.shape[0]
    if b.shape != (n,) or w_prior.shape != (n,):
        raise DimensionMismatch(
            f"b and w_prior must have length {n}, got {b.shape} and {w_prior.shape}"
        )
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    m = a + lam * np.eye(n)
    rhs = b + lam * w_prior
    return solve_spd(m, rhs)


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """General dense solve of a @ x = b (LU with partial pivoting).

    Used for the asymmetric fixed-point systems where a Cholesky route would
    silently change the answer. A singular or numerically unsolvable system
    raises NotPositiveDefinite, keeping one failure signature for all
    unregularized solves.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.shape[0],):
        raise DimensionMismatch(f"b must have length {a.shape[0]}, got {b.shape}")
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"singular system: {exc}") from exc
    if not np.isfinite(x).all():
        raise NotPositiveDefinite("system solution is non-finite")
    return x


def least_squares(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm minimizer of ||a @ x - b||_2.

    Exact (up to roundoff) on consistent systems, including singular ones;
    this realizes the unregularized pseudo-inverse solution without a jitter
    term.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.shape[0],):
        raise DimensionMismatch(f"b must have length {a.shape[0]}, got {b.shape}")
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    return x


def _power_iteration(op, n: int, max_iters: int = 20000, rtol: float = 1e-13) -> float:
    # Deterministic start vector; the small ramp avoids being exactly
    # orthogonal to the dominant eigenvector for structured inputs.
    v = 1.0 + np.arange(n, dtype=np.float64) / max(n, 1)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = op(v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - lam) <= rtol * max(norm, 1e-300):
            return norm
        lam = norm
    return lam


def condition_estimate(a: np.ndarray) -> float:
    """Spectral condition number estimate for symmetric positive-definite a.

    Power iteration on a gives the largest eigenvalue; power iteration on
    a's inverse action (two triangular solves against the Cholesky factor)
    gives the reciprocal of the smallest. Accurate to a few percent on
    spectra with separated extremes, which is all the diagnostics need.
    """
    a = _check_symmetric(_as_matrix(a))
    n = a.shape[0]
    lower = cholesky(a)
    lam_max = _power_iteration(lambda v: a @ v, n)
    inv_action = lambda v: _backward_sub_transpose(lower, _forward_sub(lower, v))
    lam_inv_max = _power_iteration(inv_action, n)
    if lam_inv_max == 0.0:
        return float("inf")
    return float(lam_max * lam_inv_max)
