"""Random two-qubit ensembles and per-concurrence-bin protocol statistics.

States are ``rho = D D^dagger / Tr(D D^dagger)`` with ``D`` a ``4 x n_r`` matrix of
complex Gaussians. All protocol evaluations here are vectorised over the
sample axis; they reduce to the Bell-diagonal recurrence once a state is in
X-form, which is what makes a 10^5-sample run cheap.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bellmat as bm
from .protocols import DEFAULT_MAX_ITER, DEFAULT_TOL, DEGENERATE_TOL, ProtocolKind, diag_chains, m2_map, purifiable_mask

CHUNK = 10_000
DEFAULT_PROTOCOLS = (ProtocolKind.M2, ProtocolKind.M2H, ProtocolKind.DEJMPS)


class NrMode(enum.Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class EnsembleConfig:
    samples: int = 100_000
    bins: int = 30
    nr_mode: NrMode = NrMode.UNIFORM
    n_r: int = 4
    seed: int = 0
    protocols: tuple = DEFAULT_PROTOCOLS

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if NrMode(self.nr_mode) is NrMode.FIXED and self.n_r not in (1, 2, 3, 4):
            raise ValueError(f"n_r must be 1..4, got {self.n_r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "nr_mode", NrMode(self.nr_mode))
        object.__setattr__(self, "protocols", tuple(ProtocolKind(p) for p in self.protocols))

    def to_dict(self):
        return {
            "samples": self.samples,
            "bins": self.bins,
            "nr_mode": self.nr_mode.value,
            "n_r": self.n_r if self.nr_mode is NrMode.FIXED else None,
            "seed": self.seed,
            "protocols": [p.value for p in self.protocols],
        }


@dataclass
class BinStat:
    c_low: float
    c_high: float
    count: int
    fraction_purifiable: dict = field(default_factory=dict)
    mean_success: dict = field(default_factory=dict)  # over purifiable states only
    mean_success_all: dict = field(default_factory=dict)  # non-purifiable count as 0

    @property
    def center(self):
        return (self.c_low + self.c_high) / 2


# -- sampling -------------------------------------------------------------


def random_density(rng: np.random.Generator, n_r: int) -> np.ndarray:
    """One random state in the computational basis, of rank at most ``n_r``."""
    if n_r not in (1, 2, 3, 4):
        raise ValueError(f"n_r must be 1..4, got {n_r}")
    d = rng.standard_normal((4, n_r)) + 1j * rng.standard_normal((4, n_r))
    rho = d @ d.conj().T
    return rho / np.trace(rho).real


def random_densities(rng: np.random.Generator, size: int, n_r) -> np.ndarray:
    """Stack of ``size`` random computational-basis states.

    ``n_r`` is an int or an integer array of length ``size``; columns of ``D``
    beyond ``n_r`` are zeroed.
    """
    n_r = np.broadcast_to(np.asarray(n_r), (size,))
    d = rng.standard_normal((size, 4, 4)) + 1j * rng.standard_normal((size, 4, 4))
    d *= (np.arange(4)[None, :] < n_r[:, None])[:, None, :]
    rho = d @ np.conj(np.swapaxes(d, -1, -2))
    return rho / np.trace(rho, axis1=-2, axis2=-1).real[:, None, None]


def _draw_chunk(seed_seq, size, cfg: EnsembleConfig):
    rng = np.random.default_rng(seed_seq)
    if cfg.nr_mode is NrMode.UNIFORM:
        n_r = rng.integers(1, 5, size=size)
    else:
        n_r = cfg.n_r
    return random_densities(rng, size, n_r)


# -- vectorised protocols -------------------------------------------------


def _real_diag(rho):
    return np.real(np.diagonal(rho, axis1=-2, axis2=-1))


def evaluate_states(rho_bell, protocols=DEFAULT_PROTOCOLS, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Per-state purifiability and success probability for a stack of Bell-basis states.

    Returns ``{kind: (purifiable bool array, probability array)}``.
    """
    rho = np.asarray(rho_bell)
    out = {}
    xmask = bm.x_state_mask(rho)
    pre, q = m2_map(rho, "-")
    ok = xmask | (q > DEGENERATE_TOL)
    state = np.where(xmask[:, None, None], rho, pre)
    state[~ok] = np.eye(4) / 4
    weight = np.where(xmask, 1.0, np.where(ok, q, 0.0))

    if ProtocolKind.M2 in protocols:
        _, p = diag_chains(_real_diag(state), tol, max_iter)
        out[ProtocolKind.M2] = (purifiable_mask(state) & ok, weight * p)

    if ProtocolKind.M2H in protocols:
        sigma = bm.apply_local_gate(state, bm.HH)
        total = np.zeros(len(rho))
        purif = np.zeros(len(rho), dtype=bool)
        for sign in "-+":
            branch, qb = m2_map(sigma, sign)
            live = ok & (qb > DEGENERATE_TOL)
            branch[~live] = np.eye(4) / 4
            # the plus branch is not X-form, but its merged next step follows the same diagonal map
            _, p = diag_chains(_real_diag(branch), tol, max_iter)
            total += np.where(live, qb * p, 0.0)
            purif |= live & purifiable_mask(branch)
        out[ProtocolKind.M2H] = (purif, weight * total)

    if ProtocolKind.DEJMPS in protocols:
        d = _real_diag(rho)
        purif = d.max(axis=1) > 0.5
        _, p = diag_chains(d, tol, max_iter)
        out[ProtocolKind.DEJMPS] = (purif, np.where(purif, p, 0.0))
    return out


# -- ensemble driver ------------------------------------------------------


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    concurrence: np.ndarray
    purifiable: dict
    probability: dict
    bins: list


def _worker_count():
    env = os.environ.get("EPP_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _eval_chunk(args):
    seed_seq, size, cfg = args
    rho = bm.bell_from_computational(_draw_chunk(seed_seq, size, cfg), validate=False)
    return bm.concurrence(rho), evaluate_states(rho, cfg.protocols)


def run_ensemble(cfg: EnsembleConfig) -> EnsembleResult:
    """Sample ``cfg.samples`` states and tabulate per-bin statistics.

    Samples are drawn in fixed-size chunks, each from its own child of
    ``SeedSequence(cfg.seed)``, so results do not depend on the worker count.
    """
    n_chunks = math.ceil(cfg.samples / CHUNK)
    children = np.random.SeedSequence(cfg.seed).spawn(n_chunks)
    sizes = [min(CHUNK, cfg.samples - i * CHUNK) for i in range(n_chunks)]
    jobs = list(zip(children, sizes, [cfg] * n_chunks))
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        parts = list(pool.map(_eval_chunk, jobs))
    conc = np.concatenate([c for c, _ in parts])
    purif = {k: np.concatenate([r[k][0] for _, r in parts]) for k in cfg.protocols}
    prob = {k: np.concatenate([r[k][1] for _, r in parts]) for k in cfg.protocols}
    return EnsembleResult(cfg, conc, purif, prob, bin_statistics(conc, purif, prob, cfg.bins))


def bin_statistics(conc, purifiable, probability, bins) -> list[BinStat]:
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.minimum((np.asarray(conc) * bins).astype(int), bins - 1)
    out = []
    for b in range(bins):
        sel = idx == b
        n = int(sel.sum())
        stat = BinStat(float(edges[b]), float(edges[b + 1]), n)
        for kind in purifiable:
            f = purifiable[kind][sel]
            p = probability[kind][sel]
            stat.fraction_purifiable[kind] = float(f.mean()) if n else math.nan
            stat.mean_success_all[kind] = float(p.mean()) if n else math.nan
            stat.mean_success[kind] = float(p[f].mean()) if f.any() else math.nan
        out.append(stat)
    return out


def concurrence_histogram(cfg: EnsembleConfig) -> list[BinStat]:
    return run_ensemble(cfg).bins


def purifiable_fraction(cfg: EnsembleConfig) -> list[BinStat]:
    if not cfg.protocols:
        raise ValueError("at least one protocol is required")
    return run_ensemble(cfg).bins


def average_success(cfg: EnsembleConfig) -> list[BinStat]:
    return run_ensemble(cfg).bins
