"""Closed-form log densities for the zero-mean normal prediction problem.

Kernel functions (``log_k0``, ``log_k1``, ``log_q_beta_kernel``) are
vectorised over the last axis of ``w``: a ``(..., p)`` array returns a
``(...)`` array, a plain length-``p`` vector returns a float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaln

from .ltgroup import TriMatrix, log_psi_p, solve_lower_batch, tau

LOG_2PI = math.log(2.0 * math.pi)


class ImproperPosteriorError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    p: int
    n: int
    theta: TriMatrix

    def __post_init__(self):
        if self.n < self.p:
            raise ValueError(f"need n >= p, got n={self.n}, p={self.p}")
        if self.theta.dim != self.p:
            raise ValueError(f"theta has dim {self.theta.dim}, expected {self.p}")


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """A p x n data matrix whose columns are the observations X_1..X_n."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"observation matrix must be 2-D, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @cached_property
    def s(self) -> np.ndarray:
        return self.data @ self.data.T

    @cached_property
    def L(self) -> TriMatrix:
        """tau(XX'); raises NotPositiveDefiniteError for rank-deficient data.

        Computed from a QR factorisation of X' (L = R' with positive diagonal),
        which avoids squaring the condition number of X.
        """
        if self.n < self.p:
            return tau(self.s)
        r = np.linalg.qr(self.data.T, mode="r")
        r = r * np.where(np.diag(r) < 0, -1.0, 1.0)[:, None]
        d = np.abs(np.diag(r))
        if np.any(d <= 1e-13 * max(d.max(), 1e-300)) or not np.all(np.isfinite(r)):
            return tau(self.s)  # reports the offending minor
        return TriMatrix.from_array(r.T)

    def transform(self, g: TriMatrix) -> "ObservationMatrix":
        return ObservationMatrix(g.to_array() @ self.data)


def _check_dims(p_expected: int, arr: np.ndarray, what: str):
    if arr.shape[-1] != p_expected:
        raise ValueError(f"dimension mismatch: {what} has length {arr.shape[-1]}, expected {p_expected}")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def log_f1(x: ObservationMatrix, theta: TriMatrix) -> float:
    if x.p != theta.dim:
        raise ValueError(f"dimension mismatch: data has p={x.p}, theta has dim {theta.dim}")
    w = solve_lower_batch(theta.to_array(), x.data)
    return -x.n * theta.log_det() - 0.5 * x.n * x.p * LOG_2PI - 0.5 * float(np.sum(w * w))


def log_f2(z, theta: TriMatrix) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (theta.dim,):
        raise ValueError(f"dimension mismatch: z has shape {z.shape}, theta has dim {theta.dim}")
    w = solve_lower_batch(theta.to_array(), z)
    return -theta.log_det() - 0.5 * theta.dim * LOG_2PI - 0.5 * float(w @ w)


def log_t_constant(nu_total: float, p: int) -> float:
    """log of Gamma((nu_total+1)/2) / (pi^{p/2} Gamma((nu_total-p+1)/2)).

    Normaliser of (1 + w'w)^{-(nu_total+1)/2} on R^p; finite for nu_total > p - 1.
    """
    if not nu_total > p - 1:
        raise ValueError(f"normaliser undefined for nu_total={nu_total}, p={p}")
    return float(gammaln((nu_total + 1) / 2) - 0.5 * p * math.log(math.pi) - gammaln((nu_total - p + 1) / 2))


def log_c_np(n: int, p: int) -> float:
    if p < 1 or n < p:
        raise ValueError(f"invalid arguments: need n >= p >= 1, got n={n}, p={p}")
    return log_t_constant(n, p)


def log_k0(w, n: int):
    w = np.asarray(w, dtype=float)
    p = w.shape[-1]
    if n < p:
        raise ValueError(f"invalid arguments: need n >= p, got n={n}, p={p}")
    return _out(log_c_np(n, p) - 0.5 * (n + 1) * np.log1p(np.sum(w * w, axis=-1)))


def log_k1(w, n: int):
    w = np.asarray(w, dtype=float)
    return _out(log_k0(w, n) - log_psi_p(w))


def log_q_beta_kernel(w, n: int, beta: float):
    """Kernel of the predictive under the prior |Sigma|^beta dSigma / |Sigma|^{(p+1)/2}."""
    w = np.asarray(w, dtype=float)
    p = w.shape[-1]
    limit = (n - p + 1) / 2
    if not beta < limit:
        raise ImproperPosteriorError(
            f"improper posterior: beta={beta} violates β < (n−p+1)/2 = {limit:g}"
        )
    n_eff = n - 2 * beta
    return _out(log_t_constant(n_eff, p) - 0.5 * (n_eff + 1) * np.log1p(np.sum(w * w, axis=-1)))


def log_qH(z, x: ObservationMatrix) -> float:
    z = np.asarray(z, dtype=float)
    _check_dims(x.p, z, "z")
    L = x.L
    return -L.log_det() + log_k1(solve_lower_batch(L.to_array(), z), x.n)
