"""Invariant predictives of the form q_k(z | x) = |L|^{-1} k(L^{-1} z), L = tau(xx')."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import densities
from .densities import ObservationMatrix
from .integration import mc_integrate, quadrature
from .montecarlo import Estimate, mean_estimate, run_chunks
from .sampling import RngStream, sample_k0, sample_k1_pivot
from .ltgroup import solve_lower_batch

KERNEL_NAMES = ("naive", "jeffreys", "haar", "beta")


@dataclass(frozen=True, eq=False)
class PredictiveKernel:
    """A density k on R^p defining an invariant predictive.

    ``log_k`` is vectorised over the last axis; ``sampler(rng, size)``
    returns an array of shape ``(size, p)``.
    """

    name: str
    p: int
    n: int
    log_k: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sampler: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)
    beta: float | None = None

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        if size is None:
            return self.sampler(rng, 1)[0]
        return self.sampler(rng, size)

    def label(self) -> str:
        return f"beta({self.beta:g})" if self.name == "beta" else self.name


def make_kernel(spec: str, n: int, p: int, beta: float | None = None) -> PredictiveKernel:
    """Build one of the built-in kernels: naive, jeffreys, haar or beta.

    ``spec`` may also be written ``"beta(0.5)"``.
    """
    if p < 1 or n < p:
        raise ValueError(f"invalid arguments: need n >= p >= 1, got n={n}, p={p}")
    if spec.startswith("beta(") and spec.endswith(")"):
        beta = float(spec[5:-1])
        spec = "beta"
    if spec == "naive":
        # N_p(0, I/n)
        const = 0.5 * p * (math.log(n) - densities.LOG_2PI)
        return PredictiveKernel(
            "naive", p, n,
            lambda w: const - 0.5 * n * np.sum(np.asarray(w) ** 2, axis=-1),
            lambda rng, m: rng.standard_normal((m, p)) / math.sqrt(n),
        )
    if spec == "jeffreys":
        return PredictiveKernel(
            "jeffreys", p, n,
            lambda w: densities.log_k0(w, n),
            lambda rng, m: sample_k0(rng, n, p, m),
        )
    if spec == "haar":
        return PredictiveKernel(
            "haar", p, n,
            lambda w: densities.log_k1(w, n),
            lambda rng, m: sample_k1_pivot(rng, n, p, m),
        )
    if spec == "beta":
        if beta is None:
            raise ValueError("beta kernel needs a beta value")
        beta = float(beta)
        # validates beta < (n - p + 1)/2
        densities.log_q_beta_kernel(np.zeros(p), n, beta)
        return PredictiveKernel(
            "beta", p, n,
            lambda w: densities.log_q_beta_kernel(w, n, beta),
            lambda rng, m: sample_k0(rng, n - 2 * beta, p, m),
            beta,
        )
    raise ValueError(f"unknown kernel {spec!r}; expected one of {', '.join(KERNEL_NAMES)}")


def _lower(x: ObservationMatrix) -> np.ndarray:
    return x.L.to_array()


def log_predictive(kernel: PredictiveKernel, z, x: ObservationMatrix):
    """log q_k(z | x); ``z`` may be a single vector or a ``(m, p)`` batch."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != kernel.p or x.p != kernel.p:
        raise ValueError(f"dimension mismatch: kernel p={kernel.p}, z {z.shape}, x has p={x.p}")
    L = x.L
    w = solve_lower_batch(L.to_array(), z.T).T if z.ndim == 2 else solve_lower_batch(L.to_array(), z)
    out = kernel.log_k(w) - L.log_det()
    return float(out) if np.ndim(out) == 0 else out


def sample_predictive(kernel: PredictiveKernel, rng: np.random.Generator, x: ObservationMatrix, size: int | None = None):
    """Draws z = L w with w ~ k."""
    w = kernel.sample(rng, size)
    return w @ _lower(x).T


def _tv_integrand(a: PredictiveKernel, b: PredictiveKernel):
    def f(w):
        return 0.5 * np.abs(np.exp(a.log_k(w)) - np.exp(b.log_k(w)))

    def split(w):
        return a.log_k(w) - b.log_k(w)

    return f, split


def variation_distance(
    a: PredictiveKernel,
    b: PredictiveKernel,
    method: str = "quadrature",
    budget: int = 10**6,
    seed: int = 0,
    threads: int = 1,
    tol: float | None = None,
) -> Estimate:
    """Half the L1 distance between the two kernels.

    By the change of variables z = L w this is the variation distance between
    the predictives at every x.  ``"quadrature"`` integrates deterministically
    (p <= 2).  ``"mc"`` draws from the balanced mixture (k_a + k_b)/2 and
    averages |k_a - k_b| / (k_a + k_b), which lies in [0, 1].
    ``"mc-cube"`` uses uniform importance sampling on the tangent cube.
    """
    if (a.n, a.p) != (b.n, b.p):
        raise ValueError(f"kernels disagree on (n, p): {(a.n, a.p)} vs {(b.n, b.p)}")
    if method == "quadrature":
        f, split = _tv_integrand(a, b)
        est = quadrature(f, a.p, split=split)
        if tol is not None and est.stderr > tol:
            est = Estimate(est.mean, est.stderr, 0, None, est.method, True)
        return est
    stream = RngStream(seed, 101)
    if method == "mc":
        def task(rng, m):
            pick = rng.random(m) < 0.5
            w = np.where(pick[:, None], a.sampler(rng, m), b.sampler(rng, m))
            la, lb = a.log_k(w), b.log_k(w)
            # |ka - kb| / (ka + kb) = tanh(|la - lb| / 2)
            return np.tanh(0.5 * np.abs(la - lb))

        return mean_estimate(run_chunks(task, budget, stream, threads), seed, tol)
    if method == "mc-cube":
        f, _ = _tv_integrand(a, b)
        est = mc_integrate(f, a.p, stream, budget, threads)
        if tol is not None and est.stderr > tol:
            est = Estimate(est.mean, est.stderr, est.n_samples, seed, "mc", True)
        return est
    raise ValueError(f"unknown method {method!r}")


def normalization(kernel: PredictiveKernel, method: str = "quadrature", budget: int = 10**6, seed: int = 0) -> Estimate:
    """Integral of exp(log_k) over R^p."""
    f = lambda w: np.exp(kernel.log_k(w))
    if method == "quadrature":
        return quadrature(f, kernel.p)
    return mc_integrate(f, kernel.p, RngStream(seed, 102), budget)
