"""Closed-form states and success probabilities.

Covers rank-two Bell mixtures, maximally entangled mixed states (MEMS) and
a four-parameter rank-three family that contains the MEMS.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import bellmat as bm
from .protocols import DEGENERATE_TOL, DegenerateBranch

SERIES_TOL = 1e-15
MEMS_BOUNDARY = 2 / 3


class DomainError(ValueError):
    pass


# -- rank two -------------------------------------------------------------


@dataclass(frozen=True)
class Rank2Trajectory:
    """Weights ``a``, auxiliaries ``b = 1/a - 1``, step probabilities ``p`` and running products ``P``.

    ``p[0]`` and ``P[0]`` belong to the initial state and are 1 by convention.
    """

    a: np.ndarray
    b: np.ndarray
    p: np.ndarray
    P: np.ndarray


def rank2_trajectory(a0: float, n: int) -> Rank2Trajectory:
    """Iterate ``a -> a^2 / (a^2 + (1-a)^2)`` in closed form for ``n`` steps."""
    if not 0.5 < a0 <= 1:
        raise DomainError(f"a0 must lie in (1/2, 1], got {a0}")
    if not 0 <= n <= 64:
        raise DomainError(f"n must lie in [0, 64], got {n}")
    b0 = 1 / a0 - 1
    # b_k = b0**(2**k); fine to underflow to 0
    b = np.array([b0 ** (2.0**k) for k in range(n + 1)])
    a = 1 / (1 + b)
    p = np.ones(n + 1)
    p[1:] = a[:-1] ** 2 + (1 - a[:-1]) ** 2
    return Rank2Trajectory(a, b, p, np.cumprod(p))


def rank2_telescoped(a0: float, n: int) -> float:
    """``P_n`` from the telescoped product formula."""
    b0 = 1 / a0 - 1
    bn = b0 ** (2.0**n)
    return (1 + bn) / (1 - bn) * (1 - b0) / (1 + b0)


class Rank2Combo(enum.Enum):
    PSI_PSI = "PsiPsi"  # Psi-/Psi+ mixture
    PSI_PHI_OPP = "PsiPhiOpp"  # Psi-+ with Phi+-
    PSI_PHI_SAME = "PsiPhiSame"  # Psi-+ with Phi-+


def rank2_limit(a0: float, combo=Rank2Combo.PSI_PSI) -> float:
    """Asymptotic success probability of a rank-two Bell mixture with weight ``a0`` on the Psi state."""
    if not 0.5 < a0 <= 1:
        raise DomainError(f"a0 must lie in (1/2, 1], got {a0}")
    c = 2 * a0 - 1
    return c * c if Rank2Combo(combo) is Rank2Combo.PSI_PHI_SAME else c


# -- MEMS -----------------------------------------------------------------


class MemsKind(enum.Enum):
    TYPE_I = "TypeI"
    TYPE_II = "TypeII"


@dataclass(frozen=True)
class MemsParams:
    C: float

    def __post_init__(self):
        if not 0 <= self.C <= 1:
            raise DomainError(f"concurrence must lie in [0, 1], got {self.C}")

    @property
    def kind(self) -> MemsKind:
        return MemsKind.TYPE_I if self.C >= MEMS_BOUNDARY else MemsKind.TYPE_II

    @property
    def alpha(self) -> tuple[float, float]:
        return (2 + 3 * self.C) / 6, (2 - 3 * self.C) / 6


_KET01 = bm.ket_projector([0, 1, 0, 0])


def mems_type1(C: float) -> np.ndarray:
    return C * bm.bell_projector(bm.PHI_PLUS) + (1 - C) * _KET01


def mems_type2(C: float) -> np.ndarray:
    ap, am = MemsParams(C).alpha
    return ap * bm.bell_projector(bm.PHI_PLUS) + am * bm.bell_projector(bm.PHI_MINUS) + _KET01 / 3


def mems(C: float) -> np.ndarray:
    """MEMS with concurrence ``C``: type II below 2/3, type I from 2/3 up."""
    kind = MemsParams(C).kind
    return mems_type1(C) if kind is MemsKind.TYPE_I else mems_type2(C)


def mems_concurrence_of_purity(P: float) -> float:
    """Concurrence on the MEMS boundary of the concurrence-purity plane."""
    if not 1 / 3 <= P <= 1 + 1e-15:
        raise DomainError(f"purity must lie in [1/3, 1], got {P}")
    if P >= 5 / 9:
        return (1 + math.sqrt(max(2 * P - 1, 0.0))) / 2
    return math.sqrt(max(2 * P - 2 / 3, 0.0))


def _mems1_chain(C, l):
    if l == 0:
        return C
    if C == 1:
        return 1.0
    e = 2.0**l
    log_term = (e - 1) * math.log(2) + e * math.log(1 / C - 1)
    if log_term > 700:
        return 0.0
    if log_term < -745:
        return 1.0
    return 1 / (math.exp(log_term) + 1)


def mems1_chain(C: float, l: int) -> float:
    """Concurrence of the type-I MEMS reached after ``l`` consecutive ``M+`` rows.

    ``C_l = 1 / (2**(2**l - 1) * (1/C - 1)**(2**l) + 1)``, evaluated in logs.
    """
    if not 0 < C <= 1:
        raise DomainError(f"C must lie in (0, 1], got {C}")
    if not 0 <= l <= 32:
        raise DomainError(f"l must lie in [0, 32], got {l}")
    return _mems1_chain(C, l)


def mems1_prob(C: float) -> float:
    """Series for the M2H2 success probability of a type-I MEMS."""
    if not 0 < C <= 1:
        raise DomainError(f"C must lie in (0, 1], got {C}")
    total = 0.0
    prod = 1.0
    # terms fall at least geometrically (ratio <= 1/2), so 64 terms reach 1e-15
    for l in range(64):
        prod *= _mems1_chain(C, l)
        term = C / 2 ** (l + 1) * prod
        total += term
        if term < SERIES_TOL:
            break
    return total


def mems2_chain(C: float, l: int) -> float:
    """``(3/2)**(2**l - 1) * C**(2**l)``: type-II concurrence after ``l`` ``M+`` rows."""
    if not 0 <= C <= MEMS_BOUNDARY + 1e-15:
        raise DomainError(f"C must lie in [0, 2/3], got {C}")
    if not 0 <= l <= 32:
        raise DomainError(f"l must lie in [0, 32], got {l}")
    if C == 0:
        return 0.0
    e = 2.0**l
    return math.exp((e - 1) * math.log(1.5) + e * math.log(C))


def mems2_prob(C: float) -> float:
    """Series for the M2H2 success probability of a type-II MEMS."""
    if not 0 <= C <= MEMS_BOUNDARY + 1e-15:
        raise DomainError(f"C must lie in [0, 2/3], got {C}")
    total = 0.0
    for l in range(33):
        term = 0.5 * 3.0**-l * mems2_chain(C, l) ** 2
        total += term
        if term < SERIES_TOL:
            break
    return total


def mems_prob(C: float) -> float:
    return mems1_prob(C) if MemsParams(C).kind is MemsKind.TYPE_I else mems2_prob(C)


# -- rank three -----------------------------------------------------------


@dataclass(frozen=True)
class Rank3Params:
    """Weights ``(w +- u)/2`` on ``|+->`` and ``1 - w`` on ``|01>``.

    ``|+> = cos(theta/2)|00> + e^{i phi} sin(theta/2)|11>`` and ``|->`` is its
    orthogonal partner in the same subspace, so the concurrence is
    ``|u| sin(theta)``.
    """

    w: float
    u: float
    theta: float = math.pi / 2
    phi: float = 0.0

    def __post_init__(self):
        if not abs(self.u) <= self.w + 1e-15 or self.w > 1 + 1e-15:
            raise DomainError(f"need |u| <= w <= 1, got w={self.w}, u={self.u}")
        if not -1e-15 <= self.theta <= math.pi / 2 + 1e-15:
            raise DomainError(f"theta must lie in [0, pi/2], got {self.theta}")

    @property
    def concurrence(self) -> float:
        return abs(self.u) * math.sin(self.theta)

    @property
    def purity(self) -> float:
        return (self.u**2 + self.w**2) / 2 + (1 - self.w) ** 2


def rank3(params: Rank3Params) -> np.ndarray:
    """Bell-basis matrix of the rank-three family (an X-state)."""
    w, u, th, ph = params.w, params.u, params.theta, params.phi
    m = np.zeros((4, 4), dtype=complex)
    shift = u / 2 * math.sin(th) * math.cos(ph)
    m[1, 1] = w / 2 - shift
    m[2, 2] = w / 2 + shift
    m[1, 2] = u / 2 * (math.cos(th) - 1j * math.sin(th) * math.sin(ph))
    m[2, 1] = np.conj(m[1, 2])
    m[0, 0] = m[0, 3] = m[3, 0] = m[3, 3] = (1 - w) / 2
    return m


def rank3_cp_bounds(P: float, theta: float) -> list[tuple[float, float]]:
    """Admissible concurrence intervals of the rank-three family at purity ``P``.

    Built from the ``|u|`` intervals, each scaled by ``sin(theta)``.
    """
    if not 1 / 3 - 1e-15 <= P <= 1 + 1e-15:
        raise DomainError(f"purity must lie in [1/3, 1], got {P}")
    s = math.sin(theta)
    if P <= 5 / 9:
        intervals = [(0.0, math.sqrt(max(2 * P - 2 / 3, 0.0)))]
    else:
        r = math.sqrt(max(2 * P - 1, 0.0))
        intervals = [(0.0, (1 - r) / 2), (r, (1 + r) / 2)]
    return [(lo * s, hi * s) for lo, hi in intervals]


def rank3_from_cp(C: float, P: float, theta: float, phi: float = 0.0) -> list[Rank3Params]:
    """All family members with concurrence ``C`` and purity ``P`` (u >= 0)."""
    s = math.sin(theta)
    if s == 0:
        return []
    u = C / s
    # (w^2 + u^2)/2 + (1 - w)^2 = P
    disc = 6 * P - 2 - 3 * u * u
    if disc < -1e-12:
        return []
    root = math.sqrt(max(disc, 0.0))
    found = []
    for w in sorted({(2 + root) / 3, (2 - root) / 3}, reverse=True):
        if u <= w + 1e-12 and w <= 1 + 1e-12:
            found.append(Rank3Params(min(w, 1.0), min(u, w, 1.0), theta, phi))
    return found


def rank3_first_step(params: Rank3Params) -> tuple[float, float, float, float]:
    """``(rho22, rho44, p, C_out)`` after Hadamards and one ``M-`` step.

    The output is a rank-two mixture of ``|Phi->`` and ``|Psi+>`` reached with
    probability ``p = (w^2 - u^2 cos^2 theta) / 2``; ``p * C_out`` equals
    ``C^2 / 2`` for the input concurrence ``C``.
    """
    w, u, th = params.w, params.u, params.theta
    p = (w * w - u * u * math.cos(th) ** 2) / 2
    if p <= DEGENERATE_TOL:
        raise DegenerateBranch(f"first-step probability {p:.3e}")
    rho44 = (w * w - u * u * math.cos(2 * th)) / (4 * p)
    rho22 = (w * w - u * u) / (4 * p)
    c_out = u * u * math.sin(th) ** 2 / (2 * p)
    return rho22, rho44, p, c_out
