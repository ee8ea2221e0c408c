"""Arithmetic on the group of lower-triangular matrices with positive diagonal.

Single-matrix operations work on :class:`TriMatrix` values.  The ``*_batch``
helpers operate on stacks of dense lower-triangular arrays of shape
``(m, p, p)`` and are what the Monte Carlo estimators use.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

# pivot <= PIVOT_RTOL * max(diag(E)) means "not positive definite"
PIVOT_RTOL = 1e-13
EQ_RTOL = 1e-12


class NotPositiveDefiniteError(ValueError):
    """Raised when a triangular factorization hits a non-positive pivot."""

    def __init__(self, minor: int, pivot: float):
        self.minor = minor
        self.pivot = pivot
        super().__init__(
            f"matrix is not positive definite: leading minor of order {minor} "
            f"has non-positive pivot {pivot:.3e}"
        )


class TriMatrix:
    """Element of the lower-triangular positive-diagonal group.

    Only the lower triangle is stored, row-major, as ``p(p+1)/2`` values.
    Instances are immutable.
    """

    __slots__ = ("_dim", "_entries")

    def __init__(self, dim: int, entries):
        entries = np.array(entries, dtype=float).ravel()
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        if entries.size != dim * (dim + 1) // 2:
            raise ValueError(
                f"expected {dim * (dim + 1) // 2} lower-triangle entries for dim {dim}, "
                f"got {entries.size}"
            )
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        diag = entries[_diag_positions(dim)]
        if np.any(diag <= 0):
            raise ValueError("diagonal entries must be strictly positive")
        entries.setflags(write=False)
        self._dim = dim
        self._entries = entries

    @classmethod
    def from_array(cls, a) -> "TriMatrix":
        """Build from a dense square array; entries above the diagonal must be zero."""
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if np.any(np.triu(a, 1) != 0):
            raise ValueError("matrix has nonzero entries above the diagonal")
        p = a.shape[0]
        return cls(p, a[_tril(p)])

    @classmethod
    def identity(cls, dim: int) -> "TriMatrix":
        return cls.from_array(np.eye(dim))

    @classmethod
    def diag(cls, values) -> "TriMatrix":
        return cls.from_array(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def diagonal(self) -> np.ndarray:
        return self._entries[_diag_positions(self._dim)]

    def to_array(self) -> np.ndarray:
        out = np.zeros((self._dim, self._dim))
        out[_tril(self._dim)] = self._entries
        return out

    def det(self) -> float:
        return float(np.prod(self.diagonal))

    def log_det(self) -> float:
        return float(np.sum(np.log(self.diagonal)))

    def __matmul__(self, other):
        if isinstance(other, TriMatrix):
            return group_mul(self, other)
        return self.to_array() @ np.asarray(other, dtype=float)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TriMatrix):
            return NotImplemented
        if other.dim != self.dim:
            return False
        scale = max(1.0, float(np.max(np.abs(self._entries))), float(np.max(np.abs(other._entries))))
        return bool(np.all(np.abs(self._entries - other._entries) <= EQ_RTOL * scale))

    __hash__ = None

    def __repr__(self) -> str:
        return f"TriMatrix(dim={self._dim}, entries={self._entries.tolist()})"


@lru_cache(maxsize=None)
def _diag_positions(dim: int) -> np.ndarray:
    i = np.arange(dim)
    return i * (i + 1) // 2 + i


@lru_cache(maxsize=None)
def _tril(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(dim)


def as_spd(e) -> np.ndarray:
    """Validate and return a symmetric square array."""
    e = np.asarray(e, dtype=float)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {e.shape}")
    scale = max(1.0, float(np.max(np.abs(e))))
    if np.max(np.abs(e - e.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return e


def tau(e) -> TriMatrix:
    """Lower Cholesky factor: the unique T with positive diagonal and TT' = E."""
    e = as_spd(e)
    p = e.shape[0]
    threshold = PIVOT_RTOL * float(np.max(np.diag(e)))
    t = np.zeros((p, p))
    for j in range(p):
        pivot = e[j, j] - t[j, :j] @ t[j, :j]
        if not pivot > threshold:
            raise NotPositiveDefiniteError(j + 1, float(pivot))
        t[j, j] = math.sqrt(pivot)
        for i in range(j + 1, p):
            t[i, j] = (e[i, j] - t[i, :j] @ t[j, :j]) / t[j, j]
    return TriMatrix.from_array(t)


def group_mul(g: TriMatrix, h: TriMatrix) -> TriMatrix:
    if g.dim != h.dim:
        raise ValueError(f"dimension mismatch: {g.dim} vs {h.dim}")
    return TriMatrix.from_array(np.tril(g.to_array() @ h.to_array()))


def inverse(g: TriMatrix) -> TriMatrix:
    p = g.dim
    return TriMatrix.from_array(np.tril(solve_lower_batch(g.to_array(), np.eye(p))))


def solve_lower(g: TriMatrix, z) -> np.ndarray:
    """Forward substitution: the vector w with g w = z."""
    z = np.asarray(z, dtype=float)
    if z.shape != (g.dim,):
        raise ValueError(f"dimension mismatch: expected length {g.dim}, got shape {z.shape}")
    return solve_lower_batch(g.to_array(), z)


def modular_delta(g: TriMatrix) -> float:
    return math.exp(log_modular_delta(g))


def log_modular_delta(g: TriMatrix) -> float:
    p = g.dim
    i = np.arange(1, p + 1)
    return float(np.sum((p - 2 * i + 1) * np.log(g.diagonal)))


def log_haar_right_density(g: TriMatrix) -> float:
    """Log density of right Haar measure w.r.t. Lebesgue measure on the lower triangle."""
    p = g.dim
    i = np.arange(1, p + 1)
    return float(-np.sum((p - i + 1) * np.log(g.diagonal)))


def log_haar_left_density(g: TriMatrix) -> float:
    p = g.dim
    i = np.arange(1, p + 1)
    return float(-np.sum(i * np.log(g.diagonal)))


def psi_p(w) -> float:
    """Product form (1+w'w)^{-(p-1)/2} prod_{i<p} (1 + w_1^2 + ... + w_i^2); 1 when p = 1."""
    w = np.asarray(w, dtype=float).ravel()
    p = w.size
    if p == 1:
        return 1.0
    partial = 1.0 + np.cumsum(w * w)
    return float(np.prod(partial[:-1]) * partial[-1] ** (-(p - 1) / 2))


def log_psi_p(w) -> np.ndarray:
    """Vectorised log of :func:`psi_p` over the last axis of ``w``."""
    w = np.asarray(w, dtype=float)
    p = w.shape[-1]
    if p == 1:
        return np.zeros(w.shape[:-1])
    partial = np.log1p(np.cumsum(w * w, axis=-1))
    return np.sum(partial[..., :-1], axis=-1) - 0.5 * (p - 1) * partial[..., -1]


# -- batched kernels -------------------------------------------------------


def cholesky_batch(e: np.ndarray) -> np.ndarray:
    """Lower Cholesky factors of a stack of SPD matrices ``(..., p, p)``.

    Same pivot rule as :func:`tau`; raises if any matrix in the stack fails.
    """
    e = np.asarray(e, dtype=float)
    p = e.shape[-1]
    threshold = PIVOT_RTOL * np.max(np.diagonal(e, axis1=-2, axis2=-1), axis=-1)
    t = np.zeros_like(e)
    for j in range(p):
        pivot = e[..., j, j] - np.einsum("...k,...k->...", t[..., j, :j], t[..., j, :j])
        bad = ~(pivot > threshold)
        if np.any(bad):
            raise NotPositiveDefiniteError(j + 1, float(np.min(pivot[bad]) if pivot.ndim else pivot))
        d = np.sqrt(pivot)
        t[..., j, j] = d
        if j + 1 < p:
            below = e[..., j + 1 :, j] - np.einsum("...ik,...k->...i", t[..., j + 1 :, :j], t[..., j, :j])
            t[..., j + 1 :, j] = below / d[..., None]
    return t


def solve_lower_batch(t: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Forward substitution broadcast over leading axes.

    ``t`` is ``(..., p, p)`` lower triangular, ``z`` is ``(..., p)`` or
    ``(..., p, k)`` for several right-hand sides.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    p = t.shape[-1]
    matrix_rhs = z.ndim == t.ndim
    if z.shape[-2 if matrix_rhs else -1] != p:
        raise ValueError(f"dimension mismatch: triangular factor is {p}x{p}, rhs shape {z.shape}")
    out = np.empty(np.broadcast_shapes(t.shape[:-2], z.shape[: z.ndim - (2 if matrix_rhs else 1)])
                   + z.shape[z.ndim - (2 if matrix_rhs else 1):])
    for i in range(p):
        if matrix_rhs:
            acc = z[..., i, :] - np.einsum("...k,...kj->...j", t[..., i, :i], out[..., :i, :])
            out[..., i, :] = acc / t[..., i, i][..., None]
        else:
            acc = z[..., i] - np.einsum("...k,...k->...", t[..., i, :i], out[..., :i])
            out[..., i] = acc / t[..., i, i]
    return out


def log_det_batch(t: np.ndarray) -> np.ndarray:
    return np.sum(np.log(np.diagonal(t, axis1=-2, axis2=-1)), axis=-1)
