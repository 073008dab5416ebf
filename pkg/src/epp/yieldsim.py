"""Distribution of surviving pairs over repeated purification rounds.

Round 1 acts on ``n`` identical pairs, each surviving with probability ``p_1``.
Survivors of round ``j - 1`` are paired up again (an odd one out is dropped)
and each new pair survives round ``j`` with probability ``p_j``. The number of
survivors ``k_m`` after round ``m`` therefore follows

    k_1 ~ Binomial(n, p_1),   k_j ~ Binomial(floor(k_{j-1} / 2), p_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

MAX_TERMS = 10**7
MC_CHUNK = 100_000
# rows with less mass than this are skipped in the forward convolution
PMF_FLOOR = 1e-30
TAIL_SIGMAS = 40


class SizeExceeded(ValueError):
    pass


@dataclass(frozen=True)
class YieldConfig:
    n_pairs: int
    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if self.n_pairs < 1:
            raise ValueError(f"n_pairs must be >= 1, got {self.n_pairs}")
        if not probs:
            raise ValueError("at least one round probability is required")
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError(f"probabilities must lie in [0, 1], got {probs}")
        object.__setattr__(self, "probs", probs)

    @property
    def rounds(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class YieldDistribution:
    """``pmf[k]`` is the probability of exactly ``k`` survivors after ``round``."""

    round: int
    pmf: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.arange(len(self.pmf)) @ self.pmf)


def _binom_pmf(k, n, p):
    # scipy overflows on subnormal p; such a p is 0 for every purpose here
    return binom.pmf(k, n, 0.0 if p < 1e-300 else p)


def _halve(pmf):
    """Distribution of ``floor(k / 2)`` given the distribution of ``k``."""
    out = np.zeros((len(pmf) - 1) // 2 + 1)
    np.add.at(out, np.arange(len(pmf)) // 2, pmf)
    return out


def _compound(pairs_pmf, p):
    """Mix ``Binomial(h, p)`` over ``h ~ pairs_pmf``.

    Each block of rows only fills the columns within ``TAIL_SIGMAS`` standard
    deviations of its binomial means; the mass outside is negligible.
    """
    size = len(pairs_pmf)
    out = np.zeros(size)
    live = np.flatnonzero(pairs_pmf > PMF_FLOOR)
    for block in np.array_split(live, max(1, len(live) // 128)):
        if len(block) == 0:
            continue
        h0, h1 = block[0], block[-1]
        spread = TAIL_SIGMAS * math.sqrt(h1 * p * (1 - p)) + 1
        lo = max(0, int(h0 * p - spread))
        hi = min(h1, int(math.ceil(h1 * p + spread))) + 1
        k = np.arange(lo, hi)
        out[lo:hi] += pairs_pmf[block] @ _binom_pmf(k[None, :], block[:, None], p)
    return out


def yield_pmf(cfg: YieldConfig) -> list[YieldDistribution]:
    """Exact survivor distribution after every round, by forward convolution.

    Raises
    ------
    SizeExceeded
        If ``n * 2**m`` exceeds ``MAX_TERMS``.
    """
    n, m = cfg.n_pairs, cfg.rounds
    if n * 2**m > MAX_TERMS:
        raise SizeExceeded(f"n * 2**m = {n * 2**m} exceeds {MAX_TERMS}")
    pmf = _binom_pmf(np.arange(n + 1), n, cfg.probs[0])
    out = [YieldDistribution(1, pmf)]
    for j, p in enumerate(cfg.probs[1:], start=2):
        pmf = _compound(_halve(pmf), p)
        out.append(YieldDistribution(j, pmf))
    return out


def mean_two_rounds_closed(n: int, p1: float, p2: float) -> float:
    """Mean survivors after two rounds: ``n p1 p2 / 2 - (p2/4)(1 - (1 - 2 p1)**n)``."""
    return n * p1 * p2 / 2 - p2 / 4 * (1 - (1 - 2 * p1) ** n)


def dominant_mean(cfg: YieldConfig) -> float:
    """Leading term ``n p_1 ... p_m / 2**(m-1)`` of the round-``m`` mean (floors ignored)."""
    return cfg.n_pairs * math.prod(cfg.probs) / 2 ** (cfg.rounds - 1)


def pairings_count(N: int) -> int:
    """Number of ways to pair up ``N`` distinct states, as given by the closed forms

    ``N! / ((N/2)! 2**(N/2))`` for even ``N`` and ``3 * 2**(h-1) * h!`` with
    ``h = N // 2`` for odd ``N``.
    """
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N!r}")
    N = int(N)
    h = N // 2
    if N % 2 == 0:
        return math.factorial(N) // (math.factorial(h) * 2**h)
    return 3 * 2 ** (h - 1) * math.factorial(h)


def mc_yield(cfg: YieldConfig, trials: int, seed: int = 0) -> list[YieldDistribution]:
    """Empirical survivor distributions from ``trials`` simulated runs.

    Trials are drawn in fixed chunks, each from its own child of
    ``SeedSequence(seed)``, so the result depends only on ``seed``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    n = cfg.n_pairs
    sizes = [min(MC_CHUNK, trials - i) for i in range(0, trials, MC_CHUNK)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    counts = [np.zeros(n + 1, dtype=np.int64) for _ in cfg.probs]
    for child, size in zip(children, sizes):
        rng = np.random.default_rng(child)
        k = rng.binomial(n, cfg.probs[0], size=size)
        counts[0] += np.bincount(k, minlength=n + 1)
        for j, p in enumerate(cfg.probs[1:], start=1):
            k = rng.binomial(k // 2, p)
            counts[j] += np.bincount(k, minlength=n + 1)
    out = []
    for j, c in enumerate(counts, start=1):
        top = n // 2 ** (j - 1)
        out.append(YieldDistribution(j, c[: top + 1] / trials))
    return out
