"""Estimates with uncertainty, and a thread-count-independent chunked MC runner."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .sampling import RngStream

CHUNK_SIZE = 50_000


@dataclass(frozen=True)
class Estimate:
    """A value with its uncertainty.

    For ``method == "mc"`` ``stderr`` is the Monte Carlo standard error; for
    ``"quadrature"`` it is the integrator's absolute error bound; ``"exact"``
    values carry zero error.  ``partial`` flags a result that did not meet
    its requested tolerance.
    """

    mean: float
    stderr: float
    n_samples: int
    seed: int | None = None
    method: str = "mc"
    partial: bool = False

    def lower(self, k: float = 3.0) -> float:
        return self.mean - k * self.stderr

    def upper(self, k: float = 3.0) -> float:
        return self.mean + k * self.stderr

    def within(self, target: float, k: float = 3.0, extra_sigma: float = 0.0) -> bool:
        sigma = math.hypot(self.stderr, extra_sigma)
        return abs(self.mean - target) <= k * sigma

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(float(value), 0.0, 0, None, "exact")


def combined_stderr(*estimates: Estimate) -> float:
    return math.sqrt(sum(e.stderr ** 2 for e in estimates))


def agree(a: Estimate, b: Estimate, k: float = 3.0) -> bool:
    return abs(a.mean - b.mean) <= k * combined_stderr(a, b)


def mean_estimate(values: np.ndarray, seed: int | None, tol: float | None = None) -> Estimate:
    values = np.asarray(values, dtype=float)
    m = values.size
    se = float(np.std(values, ddof=1) / math.sqrt(m)) if m > 1 else math.inf
    return Estimate(float(np.mean(values)), se, m, seed, "mc", tol is not None and se > tol)


def chunk_sizes(total: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(total, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def run_chunks(
    task: Callable[[np.random.Generator, int], np.ndarray],
    total: int,
    stream: RngStream,
    threads: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> np.ndarray:
    """Evaluate ``task(generator, m)`` over fixed-size chunks and concatenate in chunk order.

    Chunk ``i`` always uses sub-stream ``i`` of ``stream``, so the result does
    not depend on ``threads``.
    """
    sizes = chunk_sizes(total, chunk_size)

    def work(i):
        return np.asarray(task(stream.generator(i), sizes[i]))

    if threads <= 1 or len(sizes) <= 1:
        parts = [work(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    return np.concatenate(parts) if parts else np.empty(0)
