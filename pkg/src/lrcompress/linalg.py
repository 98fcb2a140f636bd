"""Dense matrix arithmetic and decompositions used by every other module.

Matrices are plain 2-D float64 numpy arrays in row-major (C) order.
Activation matrices follow the n x p convention: one column per sample
(see the README, this trips people up constantly).

Factorizations are made deterministic by a fixed sign convention: the
first nonzero entry of every left singular vector is non-negative, with
the matching row of Vt flipped to preserve the product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DecompositionError,
    DimensionError,
    NumericalError,
    SingularSystemError,
)

__all__ = [
    "SvdFactors",
    "add_scaled_identity",
    "as_matrix",
    "as_vector",
    "fix_column_signs",
    "frobenius_norm",
    "matmul",
    "solve_spd",
    "svd",
    "transpose",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce *a* to a non-empty, finite, row-major float64 2-D array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size == 0:
        raise DimensionError(f"{name} must be non-empty, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(m)


def as_vector(v, name: str = "vector", length: int | None = None) -> np.ndarray:
    """Coerce *v* to a finite float64 1-D array, optionally of fixed length."""
    w = np.asarray(v, dtype=np.float64).reshape(-1)
    if length is not None and w.shape[0] != length:
        raise DimensionError(f"{name} must have length {length}, got {w.shape[0]}")
    if not np.isfinite(w).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return w


def _checked(result: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(result).all():
        raise NumericalError(f"{op} produced non-finite values")
    return result


def matmul(a, b) -> np.ndarray:
    """Matrix product a @ b with explicit conformability checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return _checked(a @ b, "matmul")


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64).T)


def frobenius_norm(a) -> float:
    """Frobenius norm; accepts matrices or vectors."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def add_scaled_identity(a, c: float) -> np.ndarray:
    """Return a + c * I for square a."""
    a = as_matrix(a, "add_scaled_identity input")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"add_scaled_identity needs a square matrix, got {a.shape}")
    out = a.copy()
    out[np.diag_indices_from(out)] += c
    return _checked(out, "add_scaled_identity")


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD a = u @ diag(s) @ vt with r = min(rows, cols).

    s is non-negative and sorted non-increasing; u has orthonormal
    columns and vt orthonormal rows.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank_limit(self) -> int:
        return self.s.shape[0]

    def truncated(self, k: int) -> "SvdFactors":
        if not 1 <= k <= self.rank_limit:
            raise DimensionError(f"truncation rank {k} outside [1, {self.rank_limit}]")
        return SvdFactors(self.u[:, :k].copy(), self.s[:k].copy(), self.vt[:k].copy())

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


def fix_column_signs(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip columns so each one's first nonzero entry is non-negative.

    Returns the adjusted copy and the per-column sign flips applied, so a
    paired factor can be flipped to keep the product unchanged.
    """
    u = u.copy()
    flips = np.ones(u.shape[1])
    for j in range(u.shape[1]):
        nz = np.flatnonzero(u[:, j])
        if nz.size and u[nz[0], j] < 0:
            u[:, j] = -u[:, j]
            flips[j] = -1.0
    return u, flips


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, flips = fix_column_signs(u)
    return u, flips[:, None] * vt


def svd(a) -> SvdFactors:
    """Thin singular value decomposition with the deterministic sign fix."""
    a = as_matrix(a, "svd input")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(
            f"SVD failed to converge for {a.shape[0]}x{a.shape[1]} matrix"
        ) from exc
    u, vt = _fix_signs(u, vt)
    return SvdFactors(u=u, s=s, vt=vt)


def solve_spd(m, rhs) -> np.ndarray:
    """Solve m @ out = rhs for symmetric positive definite m via Cholesky.

    rhs may be a vector or a matrix of stacked right-hand sides.
    Raises SingularSystemError when a factorization pivot is not
    positive, which is the symptom of a rank-deficient Gram matrix;
    adding a ridge term (larger lambda) fixes that.
    """
    m = as_matrix(m, "spd matrix")
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"solve_spd needs a square matrix, got {m.shape}")
    asym = float(np.max(np.abs(m - m.T)))
    if asym > 1e-10 * max(1.0, float(np.max(np.abs(m)))):
        raise ValueError(f"solve_spd needs a symmetric matrix; max asymmetry {asym:g}")
    r = np.asarray(rhs, dtype=np.float64)
    if r.shape[0] != m.shape[0]:
        raise DimensionError(f"rhs shape {r.shape} does not match system shape {m.shape}")
    try:
        factor = scipy.linalg.cho_factor(m, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "system is not positive definite; increase the ridge penalty (lambda > 0)"
        ) from exc
    return _checked(scipy.linalg.cho_solve(factor, r, check_finite=False), "solve_spd")
