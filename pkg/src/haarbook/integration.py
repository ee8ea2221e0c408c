"""Integration over R^p in triangular tangent coordinates.

The map a -> w with

    w_i = sqrt(1 + w_1^2 + ... + w_{i-1}^2) * tan(a_i),   a in (-pi/2, pi/2)^p

sends the open cube onto R^p, satisfies 1 + w_1^2 + ... + w_i^2 = prod_{j<=i} sec^2 a_j,
and has Jacobian prod_i s_{i-1} sec^2 a_i.  Every kernel in this package
becomes a bounded function on the cube after multiplying by the Jacobian,
which makes both tensor quadrature (p <= 2) and uniform importance sampling
on the cube (any p) well behaved.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .montecarlo import Estimate, mean_estimate, run_chunks
from .sampling import RngStream

HALF_PI = 0.5 * math.pi

_GL_HI = np.polynomial.legendre.leggauss(24)
_GL_LO = np.polynomial.legendre.leggauss(12)


def tangent_map(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(w, log_jacobian)`` for cube points ``a`` of shape ``(..., p)``."""
    a = np.asarray(a, dtype=float)
    log_cos = np.log(np.cos(a))
    tan = np.tan(a)
    w = np.empty_like(a)
    log_jac = np.zeros(a.shape[:-1])
    log_s = np.zeros(a.shape[:-1])
    for i in range(a.shape[-1]):
        w[..., i] = np.exp(log_s) * tan[..., i]
        log_jac += log_s - 2.0 * log_cos[..., i]
        log_s = log_s - log_cos[..., i]
    return w, log_jac


def _pullback(fn: Callable[[np.ndarray], np.ndarray]):
    def g(a):
        w, log_jac = tangent_map(a)
        val = np.asarray(fn(w), dtype=float)
        jac = np.exp(log_jac)
        # fn decays to 0 faster than the Jacobian grows for every integrand we use
        return np.where(val == 0.0, 0.0, val * jac)

    return g


def _roots(d: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, grid: int) -> list[float]:
    """Sign changes of a vectorised scalar function on (lo, hi), refined by brentq."""
    x = np.linspace(lo, hi, grid + 2)[1:-1]
    s = np.sign(d(x))
    # zero runs are not roots unless the sign differs on either side of them
    nz = np.nonzero(s)[0]
    out = []
    for i, j in zip(nz[:-1], nz[1:]):
        if s[i] == s[j]:
            continue
        if j == i + 1:
            out.append(optimize.brentq(lambda t: float(d(np.array([t]))[0]), x[i], x[j], xtol=1e-14))
        else:
            out.append(float(x[(i + j) // 2]))
    return out


def _line_signature(split2, a: np.ndarray, grid: int) -> np.ndarray:
    """Per outer abscissa: inner sign-change count and the sign at the first inner node.

    The inner integral is smooth in a except where this signature changes.
    """
    b = np.linspace(-HALF_PI, HALF_PI, grid + 2)[1:-1]
    pts = np.stack(np.broadcast_arrays(a[:, None], b[None, :]), axis=-1)
    s = np.sign(split2(pts))
    return 4 * np.sum(s[:, :-1] * s[:, 1:] < 0, axis=1) + s[:, 0].astype(int) + 1


def _outer_breaks(split2, grid: int, coarse: int = 256) -> list[float]:
    """Outer abscissae where the inner root structure changes (kinks of the inner integral)."""
    a = np.linspace(-HALF_PI, HALF_PI, coarse + 2)[1:-1]
    counts = _line_signature(split2, a, grid)
    breaks = []
    for j in np.nonzero(counts[:-1] != counts[1:])[0]:
        lo, hi, c_lo = a[j], a[j + 1], counts[j]
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if _line_signature(split2, np.array([mid]), grid)[0] == c_lo:
                lo = mid
            else:
                hi = mid
        breaks.append(0.5 * (lo + hi))
    return breaks


def _panel_edges(lo: float, hi: float, hmax: float = 0.15) -> np.ndarray:
    k = max(1, int(math.ceil((hi - lo) / hmax)))
    edges = np.linspace(lo, hi, k + 1)
    # geometric grading into the cube faces, where non-integer cosine powers live
    extra = []
    if lo <= -HALF_PI + 1e-12:
        extra += list(lo + (edges[1] - lo) * 2.0 ** -np.arange(1, 30))
    if hi >= HALF_PI - 1e-12:
        extra += list(hi - (hi - edges[-2]) * 2.0 ** -np.arange(1, 30))
    return np.unique(np.concatenate([edges, extra]))


def _gauss(g: Callable[[np.ndarray], np.ndarray], edges: np.ndarray) -> tuple[float, float]:
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    totals = []
    for nodes, weights in (_GL_HI, _GL_LO):
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        totals.append(float(np.sum(g(x).reshape(mid.size, -1) * weights[None, :] * half[:, None])))
    return totals[0], abs(totals[0] - totals[1])


def _inner_line(g2, split2, a: float, grid: int) -> tuple[float, float]:
    def g(b):
        return g2(np.stack([np.full_like(b, a), b], axis=-1))

    cuts = [-HALF_PI, HALF_PI]
    if split2 is not None:
        def d(b):
            return split2(np.stack([np.full_like(b, a), b], axis=-1))

        cuts[1:1] = _roots(d, -HALF_PI, HALF_PI, grid)
    total = err = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0:
            continue
        v, e = _gauss(g, _panel_edges(lo, hi))
        total += v
        err += e
    return total, err


def quadrature(
    fn: Callable[[np.ndarray], np.ndarray],
    p: int,
    split: Callable[[np.ndarray], np.ndarray] | None = None,
    epsabs: float = 1e-11,
    epsrel: float = 1e-10,
    limit: int = 400,
    grid: int = 1600,
) -> Estimate:
    """Deterministic integral of ``fn`` over R^p for p in {1, 2}.

    ``split`` is an optional vectorised function of w whose sign changes mark
    where ``fn`` is discontinuous or has a kink (for example
    ``log k_a - log k_b``); those points are located and used as breakpoints.
    The returned ``stderr`` is the combined integrator error bound.
    """
    g = _pullback(fn)
    gsplit = None
    if split is not None:
        def gsplit(a):
            w, _ = tangent_map(a)
            return split(w)

    partial = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        if p == 1:
            g1 = lambda t: float(g(np.array([[t]]))[0])
            points = None
            if gsplit is not None:
                pts = _roots(lambda t: gsplit(t[:, None]), -HALF_PI, HALF_PI, 4000)
                points = pts or None
            val, err = integrate.quad(
                g1, -HALF_PI, HALF_PI, points=points, epsabs=epsabs, epsrel=epsrel, limit=limit
            )
            inner_err = 0.0
        elif p == 2:
            worst = [0.0]

            def outer(a):
                v, e = _inner_line(g, gsplit, a, grid)
                worst[0] = max(worst[0], e)
                return v

            points = _outer_breaks(gsplit, grid) if gsplit is not None else []
            val, err = integrate.quad(
                outer, -HALF_PI, HALF_PI, points=points or None, epsabs=epsabs, epsrel=epsrel,
                limit=max(limit, 4 * len(points)),
            )
            inner_err = worst[0] * math.pi
        else:
            raise ValueError(f"quadrature is available for p <= 2 only, got p={p}; use mc_integrate")
        partial = any(issubclass(w.category, integrate.IntegrationWarning) for w in caught)
    return Estimate(float(val), float(err + inner_err), 0, None, "quadrature", partial)


def sample_cube(rng: np.random.Generator, p: int, m: int) -> np.ndarray:
    return rng.uniform(-HALF_PI, HALF_PI, size=(m, p))


def mc_integrate(
    fn: Callable[[np.ndarray], np.ndarray],
    p: int,
    stream: RngStream,
    budget: int,
    threads: int = 1,
) -> Estimate:
    """Importance-sampling integral of ``fn`` over R^p with a uniform proposal on the tangent cube."""
    g = _pullback(fn)
    volume = math.pi ** p

    def task(rng, m):
        return volume * g(sample_cube(rng, p, m))

    return mean_estimate(run_chunks(task, budget, stream, threads), stream.seed)
