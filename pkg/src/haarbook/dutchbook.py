"""The Dutch book against an invariant predictive and the Monte Carlo checks around it.

For a kernel k the gambler buys, at price gamma = Q(C_x | x), a ticket paying
1 when the future observation falls in C_x = L {w : k(w) < k1(w)}.  The ticket
is fair under the inferrer's predictive, yet under every covariance its
expected payoff is eps0 = int (k1 - k)^+ > 0 whenever k differs from k1.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .densities import ObservationMatrix
from .integration import quadrature
from .ltgroup import TriMatrix, cholesky_batch, solve_lower_batch
from .montecarlo import Estimate, agree, combined_stderr, mean_estimate, run_chunks
from .predictive import PredictiveKernel, make_kernel, sample_predictive
from .sampling import RngStream, sample_data_batch, sample_k1_pivot


# -- rounds ------------------------------------------------------------------


@dataclass(eq=False)
class Rounds:
    """A batch of (x, z) pairs with the factor L = tau(xx') of each x."""

    x: np.ndarray  # (m, p, n)
    z: np.ndarray  # (m, p)
    L: np.ndarray  # (m, p, p)

    @classmethod
    def from_data(cls, x: np.ndarray, z: np.ndarray) -> "Rounds":
        x = np.asarray(x, dtype=float)
        return cls(x, np.asarray(z, dtype=float), cholesky_batch(x @ np.swapaxes(x, -1, -2)))

    @classmethod
    def single(cls, x: ObservationMatrix, z) -> "Rounds":
        z = np.atleast_2d(np.asarray(z, dtype=float))
        m = z.shape[0]
        return cls(
            np.broadcast_to(x.data, (m,) + x.data.shape),
            z,
            np.broadcast_to(x.L.to_array(), (m, x.p, x.p)),
        )

    @property
    def size(self) -> int:
        return self.z.shape[0]

    @cached_property
    def w(self) -> np.ndarray:
        """Maximal invariant L^{-1} z."""
        return solve_lower_batch(self.L, self.z)

    @cached_property
    def h(self) -> np.ndarray:
        """Studentised data L^{-1} x."""
        return solve_lower_batch(self.L, self.x)


def draw_model_rounds(rng: np.random.Generator, theta: np.ndarray, n: int, m: int) -> Rounds:
    """(X, Z) from the assumed model: columns of X and Z iid N_p(0, theta theta')."""
    x = sample_data_batch(rng, theta, n, m)
    z = rng.standard_normal((m, theta.shape[0])) @ theta.T
    return Rounds.from_data(x, z)


def draw_haar_rounds(rng: np.random.Generator, theta: np.ndarray, n: int, m: int) -> Rounds:
    """(X, Z) from the Haar model: X from the model, then Z ~ Q_H(. | X)."""
    p = theta.shape[0]
    x = sample_data_batch(rng, theta, n, m)
    L = cholesky_batch(x @ np.swapaxes(x, -1, -2))
    w = sample_k1_pivot(rng, n, p, m)
    return Rounds(x, np.einsum("mij,mj->mi", L, w), L)


# -- the disagreement set and the payoff -------------------------------------


@dataclass(frozen=True, eq=False)
class DisagreementRegion:
    """{w : k(w) < k1(w)}; as a subset of (x, z) space it is {(x, z) : L^{-1} z in it}."""

    kernel: PredictiveKernel
    haar: PredictiveKernel

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.asarray(self.kernel.log_k(w) < self.haar.log_k(w))

    def contains(self, x: ObservationMatrix, z) -> bool | np.ndarray:
        r = Rounds.single(x, z)
        out = self(r.w)
        return bool(out[0]) if np.ndim(z) == 1 else out

    def log_ratio(self, w) -> np.ndarray:
        return self.kernel.log_k(w) - self.haar.log_k(w)


def disagreement_region(q: PredictiveKernel) -> DisagreementRegion:
    return DisagreementRegion(q, make_kernel("haar", q.n, q.p))


def _auto(method: str, p: int) -> str:
    if method == "auto":
        return "quadrature" if p <= 2 else "mc"
    return method


def ticket_price(q: PredictiveKernel, method: str = "auto", budget: int = 10**6, seed: int = 0, threads: int = 1) -> Estimate:
    """gamma = Q(C_x | x) = integral of k over {k < k1}; the same for every x."""
    region = disagreement_region(q)
    method = _auto(method, q.p)
    if method == "quadrature":
        f = lambda w: np.where(region(w), np.exp(q.log_k(w)), 0.0)
        return quadrature(f, q.p, split=region.log_ratio)
    if method == "mc":
        def task(rng, m):
            return region(q.sampler(rng, m)).astype(float)

        return mean_estimate(run_chunks(task, budget, RngStream(seed, 201), threads), seed)
    raise ValueError(f"unknown method {method!r}")


def epsilon0(q: PredictiveKernel, method: str = "auto", budget: int = 10**6, seed: int = 0, threads: int = 1,
             tol: float | None = None) -> Estimate:
    """The gambler's expected gain: integral of (k1 - k)^+.

    ``"quadrature"`` integrates the positive part directly; ``"mc"`` averages
    (1 - k/k1)^+ over Haar-kernel draws.
    """
    region = disagreement_region(q)
    method = _auto(method, q.p)
    if method == "quadrature":
        f = lambda w: np.maximum(np.exp(region.haar.log_k(w)) - np.exp(q.log_k(w)), 0.0)
        est = quadrature(f, q.p, split=region.log_ratio)
    elif method == "mc":
        def task(rng, m):
            d = region.log_ratio(region.haar.sampler(rng, m))
            return np.where(d < 0, -np.expm1(np.minimum(d, 0.0)), 0.0)

        est = mean_estimate(run_chunks(task, budget, RngStream(seed, 202), threads), seed)
    else:
        raise ValueError(f"unknown method {method!r}")
    if tol is not None and est.stderr > tol:
        est = Estimate(est.mean, est.stderr, est.n_samples, est.seed, est.method, True)
    return est


def payoff_phi(q: PredictiveKernel, x: ObservationMatrix, z, price: float | Estimate | None = None):
    """I{z in C_x} - gamma for a single x; ``z`` may be one vector or a batch.

    The coefficient I_D(x) is identically 1: for kernels of this form the
    section C_x is either null for every x or non-null for every x, and in
    the null case the indicator never fires and gamma = 0.
    """
    gamma = _price_value(q, price)
    r = Rounds.single(x, z)
    out = disagreement_region(q)(r.w).astype(float) - gamma
    return float(out[0]) if np.ndim(z) == 1 else out


def _price_value(q, price) -> float:
    if price is None:
        return ticket_price(q).mean
    return price.mean if isinstance(price, Estimate) else float(price)


# -- general payoff schemes --------------------------------------------------


@dataclass(frozen=True, eq=False)
class Ticket:
    """One bet: pay c(x) Q(C_x | x), receive c(x) if z lands in C_x.

    ``region`` maps a :class:`Rounds` batch to a boolean array.  ``price`` is
    Q(C_x | x) when it does not depend on x (invariant regions); leave it
    ``None`` to have it estimated per x from predictive draws.
    """

    region: Callable[[Rounds], np.ndarray]
    coef: float | Callable[[np.ndarray], np.ndarray] = 1.0
    bound: float = 1.0
    price: float | None = None
    price_stderr: float = 0.0
    name: str = "ticket"

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        c = self.coef(x) if callable(self.coef) else np.full(x.shape[0], float(self.coef))
        c = np.asarray(c, dtype=float)
        if np.any(np.abs(c) > self.bound * (1 + 1e-12)):
            raise ValueError(f"ticket {self.name!r}: coefficient exceeds its declared bound {self.bound}")
        return c


@dataclass(frozen=True, eq=False)
class PayoffScheme:
    """Net payoff sum_i c_i(x) [I_{C_i}(x, z) - Q(C_{i,x} | x)]."""

    tickets: Sequence[Ticket]
    kernel: PredictiveKernel
    inner_budget: int = 400

    @property
    def bound(self) -> float:
        return float(sum(t.bound for t in self.tickets))

    def prices(self, rounds: Rounds, rng: np.random.Generator | None = None) -> list[np.ndarray]:
        """Q(C_{i,x} | x) per ticket and round; x-dependent prices use ``inner_budget`` predictive draws."""
        out = []
        for t in self.tickets:
            if t.price is not None:
                out.append(np.full(rounds.size, t.price))
                continue
            if rng is None:
                raise ValueError(f"ticket {t.name!r} needs an rng for Monte Carlo pricing")
            k = self.inner_budget
            w = self.kernel.sampler(rng, rounds.size * k).reshape(rounds.size, k, -1)
            zi = np.einsum("mij,mkj->mki", rounds.L, w)
            inner = Rounds(
                np.repeat(rounds.x, k, axis=0),
                zi.reshape(-1, zi.shape[-1]),
                np.repeat(rounds.L, k, axis=0),
            )
            out.append(t.region(inner).reshape(rounds.size, k).mean(axis=1))
        return out

    def payoff(self, rounds: Rounds, prices: list[np.ndarray] | None = None, rng=None) -> np.ndarray:
        if prices is None:
            prices = self.prices(rounds, rng)
        total = np.zeros(rounds.size)
        for t, pr in zip(self.tickets, prices):
            total += t.coefficients(rounds.x) * (t.region(rounds).astype(float) - pr)
        return total

    def price_stderr(self) -> float:
        return math.sqrt(sum((t.bound * t.price_stderr) ** 2 for t in self.tickets))


def dutch_book_scheme(q: PredictiveKernel, price: Estimate | None = None) -> PayoffScheme:
    """The one-ticket scheme phi: C the disagreement set, c = I_D = 1."""
    price = ticket_price(q) if price is None else price
    region = disagreement_region(q)
    ticket = Ticket(lambda r: region(r.w), 1.0, 1.0, price.mean, price.stderr, name="phi")
    return PayoffScheme([ticket], q)


def box_ticket(lo, hi, coef: float = 1.0, name: str = "box") -> Ticket:
    """Ticket on the axis-aligned box lo <= z <= hi (not invariant; priced per x)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return Ticket(lambda r: np.all((r.z >= lo) & (r.z <= hi), axis=-1), coef, abs(coef), None, 0.0, name)


def predictive_expectation(scheme: PayoffScheme, x: ObservationMatrix, budget: int = 20_000, seed: int = 0) -> Estimate:
    """Q(. | x)-expectation of Psi(x, .), which a fair scheme makes zero.

    Prices of x-dependent tickets are estimated from ``budget`` independent
    predictive draws and their error is folded into the returned stderr.
    """
    rng_price = RngStream(seed, 301).generator()
    rng_eval = RngStream(seed, 302).generator()
    one = Rounds.single(x, np.zeros((1, x.p)))
    prices, extra = [], 0.0
    for t in scheme.tickets:
        if t.price is not None:
            prices.append(t.price)
            extra += (t.bound * t.price_stderr) ** 2
            continue
        z = sample_predictive(scheme.kernel, rng_price, x, budget)
        hit = t.region(Rounds.single(x, z)).astype(float)
        c = float(t.coefficients(one.x)[0])
        prices.append(float(hit.mean()))
        extra += (c * hit.std(ddof=1)) ** 2 / budget
    z = sample_predictive(scheme.kernel, rng_eval, x, budget)
    r = Rounds.single(x, z)
    values = scheme.payoff(r, [np.full(budget, pr) for pr in prices])
    est = mean_estimate(values, seed)
    return Estimate(est.mean, math.hypot(est.stderr, math.sqrt(extra)), budget, seed, "mc")


def model_payoffs(
    scheme: PayoffScheme,
    theta: TriMatrix,
    n_rounds: int,
    seed: int = 0,
    threads: int = 1,
    stream_id: int = 400,
) -> np.ndarray:
    """Per-round Psi(X, Z) with (X, Z) drawn from the assumed model at ``theta``."""
    th = theta.to_array()
    n = scheme.kernel.n

    def task(rng, m):
        r = draw_model_rounds(rng, th, n, m)
        return scheme.payoff(r, rng=rng)

    return run_chunks(task, n_rounds, RngStream(seed, stream_id), threads)


def model_expectation(
    scheme: PayoffScheme,
    theta: TriMatrix,
    n_rounds: int,
    seed: int = 0,
    threads: int = 1,
    stream_id: int = 400,
) -> Estimate:
    """MC estimate of E_theta Psi(X, Z) under the assumed model."""
    est = mean_estimate(model_payoffs(scheme, theta, n_rounds, seed, threads, stream_id), seed)
    return Estimate(est.mean, math.hypot(est.stderr, scheme.price_stderr()), est.n_samples, seed, "mc")


# -- Haar-model identity ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InvariantTestFunction:
    """f(x, z) = fn(L^{-1} z, L^{-1} x), values in [-1, 1].

    Use :meth:`squashed` to build one from an unbounded score through tanh.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    invariant: bool = True

    def evaluate(self, rounds: Rounds) -> np.ndarray:
        v = np.asarray(self.fn(rounds.w, rounds.h), dtype=float)
        v = np.broadcast_to(v, (rounds.size,))
        if np.any(np.abs(v) > 1.0):
            raise ValueError(f"test function {self.name!r} left [-1, 1]")
        return v

    @classmethod
    def squashed(cls, name: str, score: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "InvariantTestFunction":
        return cls(name, lambda w, h: np.tanh(score(w, h)))

    @classmethod
    def constant(cls, c: float) -> "InvariantTestFunction":
        if abs(c) > 1:
            raise ValueError("constant must lie in [-1, 1]")
        return cls(f"const({c:g})", lambda w, h: np.full(w.shape[0], float(c)))


@dataclass(frozen=True, eq=False)
class RawTestFunction:
    """A bounded f(x, z) with no invariance guarantee (negative control)."""

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    invariant: bool = False

    def evaluate(self, rounds: Rounds) -> np.ndarray:
        v = np.asarray(self.fn(rounds.x, rounds.z), dtype=float)
        if np.any(np.abs(v) > 1.0):
            raise ValueError(f"test function {self.name!r} left [-1, 1]")
        return v


def default_test_functions(p: int) -> list[InvariantTestFunction]:
    fs = [
        InvariantTestFunction.squashed("tanh(|w|^2 - p)", lambda w, h: np.sum(w * w, axis=-1) - p),
        InvariantTestFunction.squashed("tanh(w_p^2 - w_1^2 + 0.5 w_1)", lambda w, h: w[:, -1] ** 2 - w[:, 0] ** 2 + 0.5 * w[:, 0]),
        InvariantTestFunction.squashed(
            "tanh((w . h_1)^2 - 1)", lambda w, h: np.einsum("mi,mi->m", w, h[:, :, 0]) ** 2 - 1.0
        ),
    ]
    return fs


def default_control() -> RawTestFunction:
    return RawTestFunction("tanh(z_1^2) [non-invariant]", lambda x, z: np.tanh(z[:, 0] ** 2))


def haar_identity_check(
    f, theta: TriMatrix, n: int, n_rounds: int, seed: int = 0, threads: int = 1
) -> tuple[Estimate, Estimate]:
    """E f under the assumed model (left) and under the Haar model (right)."""
    return identity_check_many([f], theta, n, n_rounds, seed, threads)[0]


def identity_check_many(fs, theta: TriMatrix, n: int, n_rounds: int, seed: int = 0, threads: int = 1):
    """:func:`haar_identity_check` for several functions on shared draws."""
    th = theta.to_array()

    def side(draw, stream_id):
        def task(rng, m):
            r = draw(rng, th, n, m)
            return np.stack([f.evaluate(r) for f in fs], axis=1)

        vals = run_chunks(task, n_rounds, RngStream(seed, stream_id), threads)
        return [mean_estimate(vals[:, i], seed) for i in range(len(fs))]

    left = side(draw_model_rounds, 501)
    right = side(draw_haar_rounds, 502)
    return list(zip(left, right))


# -- verdicts and simulation ---------------------------------------------------


@dataclass
class GainReport:
    kernel: str
    p: int
    n: int
    price: Estimate
    epsilon0: Estimate
    gambler_side: float
    model_side: list[tuple[list[float], Estimate]]
    verdict: str

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "p": self.p,
            "n": self.n,
            "price": self.price.to_dict(),
            "epsilon0": self.epsilon0.to_dict(),
            "gambler_side": self.gambler_side,
            "model_side": [{"theta": th, "estimate": e.to_dict()} for th, e in self.model_side],
            "verdict": self.verdict,
        }


def si_verdict(
    q: PredictiveKernel,
    thetas: Sequence[TriMatrix],
    budget: int,
    seed: int = 0,
    threads: int = 1,
    method: str = "auto",
) -> GainReport:
    """Assemble the strong-inconsistency evidence for the payoff phi.

    The gambler side sup_x E_Q phi is identically 0 because every ticket is
    fairly priced.  The verdict is ``"SI-holds"`` only when the lower 3 sigma
    bound of every model-side estimate is above 0; otherwise
    ``"inconclusive"`` (coherence is never claimed).
    """
    price = ticket_price(q, method, budget, seed, threads)
    eps = epsilon0(q, method, budget, seed, threads)
    scheme = dutch_book_scheme(q, price)
    model = [
        (theta.entries.tolist(), model_expectation(scheme, theta, budget, seed, threads, stream_id=400 + i))
        for i, theta in enumerate(thetas)
    ]
    ok = bool(model) and all(e.lower(3.0) > 0.0 for _, e in model)
    return GainReport(q.label(), q.p, q.n, price, eps, 0.0, model, "SI-holds" if ok else "inconclusive")


@dataclass
class Trajectory:
    round: np.ndarray
    x_digest: list[str]
    in_region: np.ndarray
    price: float
    payoff: np.ndarray
    cumulative_wealth: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cumulative_wealth = np.cumsum(self.payoff)

    @property
    def summary(self) -> Estimate:
        return mean_estimate(self.payoff, None) if self.payoff.size > 1 else Estimate(float(self.payoff.mean()), math.inf, 1)

    def records(self):
        for i in range(self.payoff.size):
            yield (int(self.round[i]), self.x_digest[i], bool(self.in_region[i]), self.price,
                   float(self.payoff[i]), float(self.cumulative_wealth[i]))


def _digest(x: np.ndarray) -> list[str]:
    return [hashlib.sha256(np.ascontiguousarray(xi).tobytes()).hexdigest()[:12] for xi in x]


def simulate_betting(
    q: PredictiveKernel,
    theta: TriMatrix,
    rounds: int,
    seed: int = 0,
    threads: int = 1,
    price: Estimate | None = None,
) -> Trajectory:
    """Repeat the phi bet ``rounds`` times with fresh (X, Z) from the model."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    price = ticket_price(q) if price is None else price
    region = disagreement_region(q)
    th = theta.to_array()

    def task(rng, m):
        r = draw_model_rounds(rng, th, q.n, m)
        hit = region(r.w).astype(float)
        return np.concatenate([hit[:, None], r.x.reshape(m, -1)], axis=1)

    out = run_chunks(task, rounds, RngStream(seed, 600), threads)
    hit = out[:, 0].astype(bool)
    x = out[:, 1:]
    return Trajectory(np.arange(1, rounds + 1), _digest(x), hit, price.mean, hit.astype(float) - price.mean)
