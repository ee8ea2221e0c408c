"""Deterministic algebraic and invariance checks run by ``haarbook verify``.

Each check returns a :class:`Check` carrying the observed worst-case error,
the tolerance it was held to and the outcome.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import densities
from .densities import ObservationMatrix
from .ltgroup import TriMatrix, cholesky_batch, group_mul, log_modular_delta, psi_p, tau
from .predictive import log_predictive, make_kernel, normalization


@dataclass
class Check:
    name: str
    value: float
    error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def random_group_element(rng: np.random.Generator, p: int) -> TriMatrix:
    a = np.tril(rng.standard_normal((p, p)), -1) + np.diag(rng.uniform(0.5, 2.0, p))
    return TriMatrix.from_array(a)


def random_spd(rng: np.random.Generator, p: int) -> np.ndarray:
    a = rng.standard_normal((p, p + 2))
    return a @ a.T


def random_data(rng: np.random.Generator, p: int, n: int) -> ObservationMatrix:
    return ObservationMatrix(rng.standard_normal((p, n)))


def psi_identity(p: int, count: int = 1000, seed: int = 0, tol: float = 1e-10) -> Check:
    """Worst relative gap between Delta(tau(I + ww')) and psi_p(w)."""
    rng = np.random.default_rng([seed, p, 31])
    w = rng.standard_normal((count, p))
    t = cholesky_batch(np.eye(p) + w[:, :, None] * w[:, None, :])
    i = np.arange(1, p + 1)
    log_delta = np.sum((p - 2 * i + 1) * np.log(np.diagonal(t, axis1=1, axis2=2)), axis=1)
    rhs = np.log([psi_p(v) for v in w])
    worst = float(np.max(np.abs(np.expm1(log_delta - rhs))))
    # the single-matrix tau and Delta on a prefix of the same draws
    for k in range(min(count, 50)):
        single = log_modular_delta(tau(np.eye(p) + np.outer(w[k], w[k])))
        worst = max(worst, abs(float(np.expm1(single - rhs[k]))))
    return Check(f"psi_identity_p{p}", worst, worst, tol, worst <= tol, f"{count} random w")


def tau_equivariance(p: int, count: int = 200, seed: int = 0, tol: float = 1e-10) -> Check:
    rng = np.random.default_rng([seed, p, 32])
    worst = 0.0
    for _ in range(count):
        g = random_group_element(rng, p)
        e = random_spd(rng, p)
        ga = g.to_array()
        lhs = tau(ga @ e @ ga.T).entries
        rhs = group_mul(g, tau(e)).entries
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
    return Check(f"tau_equivariance_p{p}", worst, worst, tol, worst <= tol, f"{count} random (g, E)")


def delta_homomorphism(p: int, count: int = 200, seed: int = 0, tol: float = 1e-12) -> Check:
    rng = np.random.default_rng([seed, p, 33])
    worst = 0.0
    for _ in range(count):
        g, h = random_group_element(rng, p), random_group_element(rng, p)
        lhs = log_modular_delta(group_mul(g, h))
        rhs = log_modular_delta(g) + log_modular_delta(h)
        worst = max(worst, abs(np.expm1(lhs - rhs)))
    return Check(f"delta_homomorphism_p{p}", worst, worst, tol, worst <= tol, f"{count} random (g, h)")


def invariance_identities(p: int, n: int, count: int = 1000, seed: int = 0, tol: float = 1e-10,
                          beta: float | None = 0.5) -> list[Check]:
    """Worst relative error of the transformation rules of f1, f2, q_H and every built-in q_k.

    Each identity is of the form density(g.) = |g|^{-c} density(.), checked
    as |expm1(log lhs - log rhs)|.
    """
    rng = np.random.default_rng([seed, p, n, 34])
    kernels = [make_kernel(k, n, p) for k in ("naive", "jeffreys", "haar")]
    if beta is not None and beta < (n - p + 1) / 2:
        kernels.append(make_kernel("beta", n, p, beta))
    worst = {"f1": 0.0, "f2": 0.0, "qH": 0.0}
    worst.update({f"q_{k.label()}": 0.0 for k in kernels})
    for _ in range(count):
        g = random_group_element(rng, p)
        theta = random_group_element(rng, p)
        x = random_data(rng, p, n)
        # z at the scale of the data keeps roundoff in the Gaussian exponent bounded
        z = x.L.to_array() @ rng.standard_normal(p)
        gx, gz, gtheta = x.transform(g), g.to_array() @ z, group_mul(g, theta)
        ld = g.log_det()
        gaps = {
            "f1": densities.log_f1(gx, gtheta) - densities.log_f1(x, theta) + n * ld,
            "f2": densities.log_f2(gz, gtheta) - densities.log_f2(z, theta) + ld,
            "qH": densities.log_qH(gz, gx) - densities.log_qH(z, x) + ld,
        }
        for k in kernels:
            gaps[f"q_{k.label()}"] = log_predictive(k, gz, gx) - log_predictive(k, z, x) + ld
        for key, gap in gaps.items():
            worst[key] = max(worst[key], abs(float(np.expm1(gap))))
    return [
        Check(f"invariance_{key}_p{p}", v, v, tol, v <= tol, f"{count} random (g, theta, x, z)")
        for key, v in worst.items()
    ]


def kernel_normalization(spec: str, n: int, p: int, budget: int = 10**6, seed: int = 0,
                         quad_tol: float = 1e-6, k_sigma: float = 3.0) -> Check:
    """Total mass of a kernel: quadrature for p <= 2, tangent-cube importance sampling otherwise."""
    k = make_kernel(spec, n, p)
    if p <= 2:
        est = normalization(k, "quadrature")
        gap = abs(est.mean - 1.0)
        return Check(f"normalization_{k.label()}_p{p}_n{n}", est.mean, est.stderr, quad_tol, gap <= quad_tol, "quadrature")
    est = normalization(k, "mc", budget, seed)
    gap = abs(est.mean - 1.0)
    return Check(
        f"normalization_{k.label()}_p{p}_n{n}", est.mean, est.stderr, k_sigma * est.stderr,
        gap <= k_sigma * est.stderr, f"importance sampling, {budget} draws",
    )


def haar_equals_jeffreys_p1(n: int, count: int = 1000, seed: int = 0) -> Check:
    rng = np.random.default_rng([seed, n, 35])
    w = rng.standard_normal((count, 1)) * 10
    gap = float(np.max(np.abs(densities.log_k1(w, n) - densities.log_k0(w, n))))
    return Check("haar_equals_jeffreys_p1", gap, gap, 0.0, gap == 0.0, "k1 = k0 when p = 1")
