"""Seeded samplers for the data model, the multivariate-t kernel and the Haar kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import ObservationMatrix, log_t_constant
from .ltgroup import TriMatrix, solve_lower_batch


@dataclass(frozen=True)
class RngStream:
    """Identifies a reproducible random stream by ``(seed, stream_id)``.

    Streams with different ids are independent (``SeedSequence`` spawn keys);
    ``generator(chunk)`` gives the sub-stream used by one work chunk.
    """

    seed: int
    stream_id: int = 0

    def generator(self, chunk: int | None = None) -> np.random.Generator:
        key = (self.stream_id,) if chunk is None else (self.stream_id, chunk)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _size_tuple(size):
    if size is None:
        return ()
    return (size,) if np.isscalar(size) else tuple(size)


def sample_normal_vec(rng: np.random.Generator, p: int, size=None) -> np.ndarray:
    return rng.standard_normal(_size_tuple(size) + (p,))


def sample_data(rng: np.random.Generator, theta: TriMatrix, n: int) -> ObservationMatrix:
    """One p x n data matrix with iid N_p(0, theta theta') columns."""
    if n < theta.dim:
        raise ValueError(f"need n >= p, got n={n}, p={theta.dim}")
    return ObservationMatrix(sample_data_batch(rng, theta.to_array(), n, None))


def sample_data_batch(rng: np.random.Generator, theta: np.ndarray, n: int, size) -> np.ndarray:
    """Stack of data matrices, shape ``size + (p, n)``."""
    p = theta.shape[-1]
    u = rng.standard_normal(_size_tuple(size) + (p, n))
    return theta @ u


def bartlett_degrees(n: float, p: int) -> np.ndarray:
    """Chi-square degrees for rows 1..p: n - i + 1."""
    return n - np.arange(p)


def sample_bartlett(rng: np.random.Generator, n: float, p: int, size=None, degrees=None) -> np.ndarray:
    """Lower-triangular V with V_ii^2 ~ chi2(d_i) and N(0,1) below the diagonal."""
    shape = _size_tuple(size)
    d = bartlett_degrees(n, p) if degrees is None else np.asarray(degrees, dtype=float)
    v = np.tril(rng.standard_normal(shape + (p, p)), -1)
    idx = np.arange(p)
    v[..., idx, idx] = np.sqrt(rng.chisquare(d, size=shape + (p,)))
    return v


def sample_k0(rng: np.random.Generator, n: float, p: int, size=None) -> np.ndarray:
    """Draws from the density proportional to (1 + w'w)^{-(n+1)/2}.

    ``n`` may be non-integer (the beta family uses n - 2 beta); requires n > p - 1.
    """
    nu = n + 1 - p
    if not nu > 0:
        raise ValueError(f"need n > p - 1, got n={n}, p={p}")
    shape = _size_tuple(size)
    u = rng.standard_normal(shape + (p,))
    g = rng.chisquare(nu, size=shape)
    return u / np.sqrt(g)[..., None]


def sample_k1_pivot(rng: np.random.Generator, n: int, p: int, size=None) -> np.ndarray:
    """Haar-kernel draws V^{-1} u with V a Bartlett pivot and u standard normal."""
    if n < p:
        raise ValueError(f"need n >= p, got n={n}, p={p}")
    shape = _size_tuple(size)
    v = sample_bartlett(rng, n, p, shape)
    u = rng.standard_normal(shape + (p,))
    return solve_lower_batch(v, u)


class EnvelopeUnavailableError(ValueError):
    pass


def rejection_bound(n: int, p: int) -> float:
    """Envelope constant M with k1 <= M g, g the t-density with n - 2p + 2 degrees of freedom."""
    if n < 2 * p - 1:
        raise EnvelopeUnavailableError(
            f"envelope unavailable for n={n} < 2p-1={2 * p - 1}, use pivot sampler"
        )
    return float(np.exp(log_t_constant(n, p) - log_t_constant(n - p + 1, p)))


def sample_k1_rejection(rng: np.random.Generator, n: int, p: int, size=None, return_rate: bool = False):
    """Exact Haar-kernel draws by accept/reject from a multivariate-t envelope.

    Proposal w ~ (1 + w'w)^{-(n-p+2)/2}, accepted with probability
    prod_{i<p} (1 + w_1^2 + ... + w_i^2)^{-1} = k1(w) / (M g(w)).
    With ``return_rate`` the empirical acceptance rate is returned as well.
    """
    rejection_bound(n, p)
    shape = _size_tuple(size)
    want = int(np.prod(shape)) if shape else 1
    accepted = []
    n_acc = n_prop = 0
    block = max(64, want)
    while n_acc < want:
        w = sample_k0(rng, n - p + 1, p, block)
        partial = 1.0 + np.cumsum(w * w, axis=-1)
        accept_prob = 1.0 / np.prod(partial[:, :-1], axis=-1)
        keep = rng.random(block) < accept_prob
        accepted.append(w[keep])
        n_acc += int(keep.sum())
        n_prop += block
    out = np.concatenate(accepted)[:want].reshape(shape + (p,))
    if return_rate:
        return out, n_acc / n_prop
    return out
