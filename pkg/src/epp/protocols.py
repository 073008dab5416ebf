"""Recurrence purification steps and protocol drivers.

One *step* consumes two identical copies of a two-qubit state. Both nodes
apply the same rank-two measurement operator ``M-`` or ``M+``
(``M+- = |Psi+-><Psi+-| + |Phi+-><Phi+-|``) to their two qubits, measure the
second pair in the computational basis and apply a local correction to the
kept pair. :func:`m2_step` gives the kept pair in closed form.
:func:`oracle_step` builds the same thing from the explicit 16x16 four-qubit
operator and is only used to validate the closed forms.

Drivers (:func:`run_m2`, :func:`run_m2h`, :func:`run_m2h2`, :func:`run_dejmps`)
chain steps until the state reaches a Bell state. They return a
:class:`PurificationResult`, or raise a :class:`PurificationError` subclass
that carries one.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import bellmat as bm

DEGENERATE_TOL = 1e-14
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 64
MAX_ITER_LIMIT = 256
ROW_WEIGHT_FLOOR = 1e-15


class Target(enum.Enum):
    PSI_MINUS = "PsiMinus"
    PHI_MINUS = "PhiMinus"
    PHI_PLUS = "PhiPlus"
    PSI_PLUS = "PsiPlus"
    BOTH = "Both"

    @classmethod
    def from_index(cls, i: int) -> "Target":
        return _BY_INDEX[i]

    @property
    def index(self) -> int:
        return _BY_INDEX.index(self)


_BY_INDEX = [Target.PSI_MINUS, Target.PHI_MINUS, Target.PHI_PLUS, Target.PSI_PLUS]


class ProtocolKind(enum.Enum):
    M2 = "m2"
    M2X = "m2x"
    M2H = "m2h"
    M2H2 = "m2h2"
    DEJMPS = "dejmps"


class PurificationError(Exception):
    """Base class. ``result`` holds the partial run when one exists."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class DegenerateBranch(PurificationError):
    pass


class NotXState(PurificationError, ValueError):
    pass


class NotConverged(PurificationError):
    pass


class NotPurifiable(PurificationError):
    pass


@dataclass(frozen=True)
class BranchProbabilities:
    q_minus: float
    q_plus: float
    r_minus: float
    r_plus: float

    @property
    def total(self) -> float:
        return self.q_minus + self.q_plus + self.r_minus + self.r_plus


@dataclass(frozen=True)
class StepOutcome:
    state: np.ndarray
    probability: float


@dataclass(frozen=True)
class TrajectoryStep:
    step: int
    probability: float
    fidelity: float
    branch: str = "main"


@dataclass
class PurificationResult:
    """Outcome of a protocol run.

    ``overall_probability`` is the product of the recorded step probabilities
    (summed over branches/rows where the protocol bifurcates) when a Bell state
    is reached, and 0 when it is not.
    """

    protocol: ProtocolKind
    target: Target | None
    overall_probability: float
    iterations: int
    trajectory: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def purified(self) -> bool:
        return self.target is not None

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "target": None if self.target is None else self.target.value,
            "overall_probability": self.overall_probability,
            "iterations": self.iterations,
            "trajectory": [
                {"step": t.step, "probability": t.probability, "fidelity": t.fidelity, "branch": t.branch}
                for t in self.trajectory
            ],
            "metadata": self.metadata,
        }


# -- closed-form step maps ------------------------------------------------


def _sign(sign) -> int:
    if sign in ("-", -1):
        return -1
    if sign in ("+", 1):
        return 1
    raise ValueError(f"sign must be '-' or '+', got {sign!r}")


def _q(rho, s):
    d = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    a = d[..., 0] + d[..., 1]
    b = d[..., 2] + d[..., 3]
    return (a * a + b * b) / 2 + s * 2 * rho[..., 0, 1].real ** 2 + s * 2 * rho[..., 2, 3].real ** 2


def m2_map(rho, sign):
    """Closed-form ``M-``/``M+`` step on a state or a stack of states.

    Returns ``(output, q)``. No validation and no degeneracy check; entries
    whose ``q`` vanishes come back as inf/nan.
    """
    s = _sign(sign)
    r = np.asarray(rho, dtype=complex)
    q = _q(r, s)
    r11, r22, r33, r44 = (r[..., i, i] for i in range(4))
    r12, r13, r14 = r[..., 0, 1], r[..., 0, 2], r[..., 0, 3]
    r23, r24, r34 = r[..., 1, 2], r[..., 1, 3], r[..., 2, 3]
    r21, r43 = r[..., 1, 0], r[..., 3, 2]
    out = np.zeros(r.shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[..., 0, 0] = (r11**2 + r22**2 + s * r12**2 + s * r21**2) / (2 * q)
        out[..., 1, 1] = (r33 * r44 + s * np.abs(r34) ** 2) / q
        out[..., 2, 2] = (r11 * r22 + s * np.abs(r12) ** 2) / q
        out[..., 3, 3] = (r33**2 + r44**2 + s * r34**2 + s * r43**2) / (2 * q)
        out[..., 0, 3] = (r14**2 + r23**2 + s * r13**2 + s * r24**2) / (2 * q)
        out[..., 1, 2] = (np.conj(r23) * np.conj(r14) + s * np.conj(r13) * np.conj(r24)) / q
        if s > 0:
            r31, r32, r41, r42 = r[..., 2, 0], r[..., 2, 1], r[..., 3, 0], r[..., 3, 1]
            out[..., 0, 1] = (r13 * r14 + r23 * r24) / (1j * q)
            out[..., 0, 2] = (r11 * r12 + r22 * r21) / (1j * q)
            out[..., 3, 1] = (r44 * r43 + r33 * r34) / (1j * q)
            out[..., 3, 2] = (r31 * r32 + r41 * r42) / (1j * q)
            out[..., 1, 0] = np.conj(out[..., 0, 1])
            out[..., 2, 0] = np.conj(out[..., 0, 2])
            out[..., 1, 3] = np.conj(out[..., 3, 1])
            out[..., 2, 3] = np.conj(out[..., 3, 2])
    out[..., 3, 0] = np.conj(out[..., 0, 3])
    out[..., 2, 1] = np.conj(out[..., 1, 2])
    for i in range(4):
        out[..., i, i] = out[..., i, i].real
    return out, q


def x_map(rho):
    """Closed-form step for X-states, either sign. Returns ``(output, p)``."""
    r = np.asarray(rho, dtype=complex)
    d = np.real(np.diagonal(r, axis1=-2, axis2=-1))
    p = (d[..., 0] + d[..., 1]) ** 2 + (d[..., 2] + d[..., 3]) ** 2
    r14, r23 = r[..., 0, 3], r[..., 1, 2]
    out = np.zeros(r.shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[..., 0, 0] = (d[..., 0] ** 2 + d[..., 1] ** 2) / p
        out[..., 3, 3] = (d[..., 2] ** 2 + d[..., 3] ** 2) / p
        out[..., 1, 1] = 2 * d[..., 2] * d[..., 3] / p
        out[..., 2, 2] = 2 * d[..., 0] * d[..., 1] / p
        out[..., 0, 3] = (r14**2 + r23**2) / p
        out[..., 1, 2] = 2 * np.conj(r23) * np.conj(r14) / p
    out[..., 3, 0] = np.conj(out[..., 0, 3])
    out[..., 2, 1] = np.conj(out[..., 1, 2])
    return out, p


def diag_map(d):
    """Bell-diagonal part of :func:`x_map`: ``(d', p)`` for fidelity vectors ``(..., 4)``."""
    d = np.asarray(d, dtype=float)
    p = (d[..., 0] + d[..., 1]) ** 2 + (d[..., 2] + d[..., 3]) ** 2
    out = np.stack(
        [
            d[..., 0] ** 2 + d[..., 1] ** 2,
            2 * d[..., 2] * d[..., 3],
            2 * d[..., 0] * d[..., 1],
            d[..., 2] ** 2 + d[..., 3] ** 2,
        ],
        axis=-1,
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        return out / p[..., None], p


def branch_probabilities(rho) -> BranchProbabilities:
    """Probabilities of the four bilateral measurement events of one step.

    ``q_minus``/``q_plus``: both nodes obtain ``M-``/``M+``. ``r_minus``: node A
    gets ``M+`` and node B ``M-``; ``r_plus``: the reverse.
    """
    r = np.asarray(rho)
    d = bm.bell_fidelities(r)
    a, b = d[0] + d[1], d[2] + d[3]
    cross = ((r[0, 1] + r[1, 0]) * (r[2, 3] + r[3, 2])).real
    return BranchProbabilities(
        q_minus=float(_q(r, -1)),
        q_plus=float(_q(r, 1)),
        r_minus=float(a * b - cross),
        r_plus=float(a * b + cross),
    )


def m2_step(rho, sign) -> StepOutcome:
    """One bilateral ``M-`` (``sign='-'``) or ``M+`` step on a general state."""
    out, q = m2_map(rho, sign)
    q = float(q)
    if q <= DEGENERATE_TOL:
        raise DegenerateBranch(f"branch {sign} has probability {q:.3e}")
    return StepOutcome(out, q)


def x_step(rho_x) -> StepOutcome:
    """One step on an X-state; ``M-`` and ``M+`` give the same output, so both count."""
    if not bm.is_x_state(rho_x):
        raise NotXState("x_step requires an X-state input")
    out, p = x_map(rho_x)
    p = float(p)
    if p <= DEGENERATE_TOL:
        raise DegenerateBranch(f"X-state step has probability {p:.3e}")
    return StepOutcome(out, p)


def dejmps_twirl(rho) -> np.ndarray:
    """Drop every off-diagonal Bell-basis entry."""
    return np.diag(bm.bell_fidelities(rho)).astype(complex)


# -- purifiability --------------------------------------------------------


def _conditions(rho):
    r = np.asarray(rho)
    d = np.real(np.diagonal(r, axis1=-2, axis2=-1))
    r12, r34 = r[..., 0, 1], r[..., 2, 3]
    psi_minus = (2 * d[..., 0] - 1) * (1 - 2 * d[..., 1]) > -((2 * r12.imag) ** 2) - (2 * r34.real) ** 2
    psi_plus = (2 * d[..., 2] - 1) * (1 - 2 * d[..., 3]) > -((2 * r34.imag) ** 2) - (2 * r12.real) ** 2
    return psi_minus, psi_plus


def purify_target(rho) -> Target | None:
    """Which Bell state repeated ``M-`` steps approach, from the two strict inequalities.

    Returns ``Target.BOTH`` if both hold and ``None`` if neither does.
    """
    minus, plus = _conditions(rho)
    if minus and plus:
        return Target.BOTH
    if minus:
        return Target.PSI_MINUS
    if plus:
        return Target.PSI_PLUS
    return None


def purifiable_mask(rho):
    """Vectorised "either condition holds" over a stack of states."""
    minus, plus = _conditions(rho)
    return minus | plus


# -- drivers --------------------------------------------------------------


def _check_run_args(tol, max_iter):
    if not 0 < tol <= 1e-3:
        raise ValueError(f"tol must lie in (0, 1e-3], got {tol}")
    if not 1 <= max_iter <= MAX_ITER_LIMIT:
        raise ValueError(f"max_iter must lie in [1, {MAX_ITER_LIMIT}], got {max_iter}")


@dataclass
class _Chain:
    target: int | None
    probability: float
    steps: list  # (probability, fidelity vector after the step)


def _x_chain(rho, tol, max_iter) -> _Chain:
    """Iterate the X-state step until some Bell fidelity reaches ``1 - tol``.

    Only the Bell diagonal decides convergence and step probabilities, so the
    diagonal recurrence is run on plain floats. The chain gives up early when
    it stalls on a non-Bell fixed point or its running probability underflows.
    """
    d0, d1, d2, d3 = (float(x) for x in bm.bell_fidelities(rho))
    steps = []
    prob = 1.0
    for _ in range(max_iter + 1):
        fid = (d0, d1, d2, d3)
        best = max(range(4), key=fid.__getitem__)
        if fid[best] >= 1 - tol:
            return _Chain(best, prob, steps)
        if len(steps) == max_iter:
            break
        p = (d0 + d1) ** 2 + (d2 + d3) ** 2
        if p <= DEGENERATE_TOL:
            break
        new = ((d0 * d0 + d1 * d1) / p, 2 * d2 * d3 / p, 2 * d0 * d1 / p, (d2 * d2 + d3 * d3) / p)
        prob *= p
        steps.append((p, np.array(new)))
        stalled = max(abs(a - b) for a, b in zip(new, fid)) < 1e-15
        d0, d1, d2, d3 = new
        if stalled or prob < 1e-300:
            break
    return _Chain(None, 0.0, steps)


def _trajectory(pre, chain: _Chain, target, branch="main", start=1):
    """Turn (probability, fidelity-vector) pairs into :class:`TrajectoryStep` records."""
    out = []
    idx = target if target is not None else None
    for n, (p, fid) in enumerate(pre + chain.steps, start=start):
        f = float(fid[idx]) if idx is not None else float(np.max(fid))
        out.append(TrajectoryStep(n, float(p), f, branch))
    return out


def _prepare(rho):
    """First ``M-`` step for non-X input; identity for X-states.

    Returns ``(state, weight, pre_steps)``.
    """
    if bm.is_x_state(rho):
        return np.asarray(rho), 1.0, []
    out = m2_step(rho, "-")
    return out.state, out.probability, [(out.probability, bm.bell_fidelities(out.state))]


def run_m2(rho, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> PurificationResult:
    """Core protocol: one ``M-`` step (skipped for X-state input), then X-state steps.

    Raises
    ------
    NotConverged
        If no Bell fidelity reaches ``1 - tol`` within ``max_iter`` steps; the
        exception carries a result with ``target=None``.
    """
    bm.check_state(rho, tol_herm=bm.INPUT_TOL, tol_trace=bm.INPUT_TOL)
    _check_run_args(tol, max_iter)
    kind = ProtocolKind.M2X if bm.is_x_state(rho) else ProtocolKind.M2
    try:
        state, weight, pre = _prepare(rho)
    except DegenerateBranch as exc:
        result = PurificationResult(kind, None, 0.0, 0)
        raise NotConverged(str(exc), result) from exc
    chain = _x_chain(state, tol, max_iter - len(pre))
    meta = {}
    if purify_target(rho) is Target.BOTH:
        meta["both_conditions"] = True
    target = None if chain.target is None else Target.from_index(chain.target)
    result = PurificationResult(
        kind,
        target,
        weight * chain.probability,
        len(pre) + len(chain.steps),
        _trajectory(pre, chain, chain.target),
        meta,
    )
    if target is None:
        raise NotConverged("M2 iteration did not reach a Bell state", result)
    return result


def _plus_pattern_step(rho):
    """Step for the ``M+`` branch after Hadamards, whose state is not an X-state.

    ``M-`` and ``M+`` outputs share the same diagonal here and are both
    X-states, so the two events are merged; the ``M-`` output is carried on.
    """
    minus, q_m = m2_map(rho, "-")
    plus, q_p = m2_map(rho, "+")
    p = float(q_m + q_p)
    if p <= DEGENERATE_TOL:
        raise DegenerateBranch(f"merged step has probability {p:.3e}")
    return minus, p


def _branch_chain(state, tol, max_iter):
    pre = []
    weight = 1.0
    if not bm.is_x_state(state):
        state, weight = _plus_pattern_step(state)
        pre.append((weight, bm.bell_fidelities(state)))
    chain = _x_chain(state, tol, max_iter - len(pre))
    if chain.target is None:
        return _Chain(None, 0.0, pre + chain.steps)
    return _Chain(chain.target, weight * chain.probability, pre + chain.steps)


def run_m2h(rho, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> PurificationResult:
    """Hadamard-assisted protocol.

    Non-X input first takes one ``M-`` step. The X-state is rotated by
    ``H (x) H`` on both qubits, after which the ``M-`` and ``M+`` outcomes are
    both kept and followed separately; the overall probability is the sum of
    the two branch products.
    """
    bm.check_state(rho, tol_herm=bm.INPUT_TOL, tol_trace=bm.INPUT_TOL)
    _check_run_args(tol, max_iter)
    try:
        state, weight, pre = _prepare(rho)
    except DegenerateBranch as exc:
        raise NotConverged(str(exc), PurificationResult(ProtocolKind.M2H, None, 0.0, 0)) from exc
    sigma = bm.apply_local_gate(state, bm.HH)
    total = 0.0
    trajectory = _trajectory(pre, _Chain(None, 0.0, []), None)
    branches = {}
    iterations = len(pre)
    best = (0.0, None)
    for sign, name in (("-", "minus"), ("+", "plus")):
        out, q = m2_map(sigma, sign)
        q = float(q)
        if q <= DEGENERATE_TOL:
            branches[name] = {"probability": 0.0, "target": None}
            continue
        chain = _branch_chain(out, tol, max_iter - len(pre) - 1)
        contribution = q * chain.probability
        total += contribution
        iterations += 1 + len(chain.steps)
        tgt = chain.target
        trajectory += _trajectory([(q, bm.bell_fidelities(out))], chain, tgt, name, start=len(pre) + 1)
        branches[name] = {
            "probability": weight * contribution,
            "target": None if tgt is None else Target.from_index(tgt).value,
            "first_step_probability": q,
        }
        if tgt is not None and contribution > best[0]:
            best = (contribution, Target.from_index(tgt))
    result = PurificationResult(
        ProtocolKind.M2H,
        best[1],
        weight * total if best[1] is not None else 0.0,
        iterations,
        trajectory,
        {"branches": branches, "preparation_probability": weight},
    )
    if best[1] is None:
        raise NotConverged("neither Hadamard branch reached a Bell state", result)
    return result


def m2h_branches(rho_x) -> tuple[StepOutcome, StepOutcome]:
    """``H (x) H`` followed by one ``M-`` and one ``M+`` step on an X-state.

    The minus-branch output is Bell-diagonal; the plus-branch output is
    non-zero only on the diagonal and the (0,2), (1,3) coherences.
    """
    if not bm.is_x_state(rho_x):
        raise NotXState("m2h_branches requires an X-state input")
    sigma = bm.apply_local_gate(rho_x, bm.HH)
    return m2_step(sigma, "-"), m2_step(sigma, "+")


def run_m2h2(
    rho_x,
    tol=DEFAULT_TOL,
    max_k=64,
    max_iter=DEFAULT_MAX_ITER,
    prepare=False,
) -> PurificationResult:
    """Second Hadamard-assisted protocol.

    Rows are indexed by the number of ``M+`` events seen so far. In row ``k``
    an ``M-`` event yields a Bell-diagonal state that is purified by X-state
    steps; an ``M+`` event is undone with ``G`` and ``H (x) H`` and moves the
    process to row ``k+1``. Rows are added until the weight of reaching the
    next row drops below ``1e-15`` or ``max_k`` rows have been used.

    With ``prepare=True`` a non-X input first takes one ``M-`` step whose
    probability multiplies the result.
    """
    bm.check_state(rho_x, tol_herm=bm.INPUT_TOL, tol_trace=bm.INPUT_TOL)
    _check_run_args(tol, max_iter)
    if not 1 <= max_k <= 64:
        raise ValueError(f"max_k must lie in [1, 64], got {max_k}")
    weight0 = 1.0
    pre = []
    if not bm.is_x_state(rho_x):
        if not prepare:
            raise NotXState("run_m2h2 requires an X-state input (or prepare=True)")
        try:
            rho_x, weight0, pre = _prepare(rho_x)
        except DegenerateBranch as exc:
            raise NotConverged(str(exc), PurificationResult(ProtocolKind.M2H2, None, 0.0, 0)) from exc
    row_state = bm.apply_local_gate(rho_x, bm.HH)
    reach = 1.0  # probability of having reached the current row
    total = 0.0
    rows = []
    trajectory = _trajectory(pre, _Chain(None, 0.0, []), None)
    iterations = len(pre)
    best = (0.0, None)
    truncated = False
    for k in range(max_k):
        out, q_m = m2_map(row_state, "-")
        q_m = float(q_m)
        row = {"row": k, "reach": reach, "q_minus": q_m, "contribution": 0.0, "target": None}
        if q_m > DEGENERATE_TOL:
            chain = _x_chain(out, tol, max_iter)
            iterations += 1 + len(chain.steps)
            if chain.target is not None:
                contrib = reach * q_m * chain.probability
                total += contrib
                row["contribution"] = contrib
                row["target"] = Target.from_index(chain.target).value
                if contrib > best[0]:
                    best = (contrib, Target.from_index(chain.target))
            trajectory += _trajectory(
                [(q_m, bm.bell_fidelities(out))], chain, chain.target, f"row{k}", start=len(pre) + k + 1
            )
        plus, q_p = m2_map(row_state, "+")
        q_p = float(q_p)
        row["q_plus"] = q_p
        rows.append(row)
        if q_p <= DEGENERATE_TOL:
            reach = 0.0
            break
        reach *= q_p
        iterations += 1
        if reach < ROW_WEIGHT_FLOOR:
            break
        row_state = bm.apply_local_gate(bm.apply_local_gate(plus, bm.G), bm.HH)
    else:
        truncated = reach >= ROW_WEIGHT_FLOOR
    meta = {
        "rows": rows,
        "tail_weight": reach,
        "row_truncation": truncated,
        "preparation_probability": weight0,
    }
    result = PurificationResult(
        ProtocolKind.M2H2,
        best[1],
        weight0 * total if best[1] is not None else 0.0,
        iterations,
        trajectory,
        meta,
    )
    if best[1] is None:
        raise NotConverged("no row of the M2H2 recursion reached a Bell state", result)
    return result


def run_dejmps(rho, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> PurificationResult:
    """Baseline: twirl to Bell-diagonal form, then iterate the diagonal map.

    Raises
    ------
    NotPurifiable
        If no Bell fidelity exceeds 1/2 after twirling.
    """
    bm.check_state(rho, tol_herm=bm.INPUT_TOL, tol_trace=bm.INPUT_TOL)
    _check_run_args(tol, max_iter)
    twirled = dejmps_twirl(rho)
    if np.max(bm.bell_fidelities(twirled)) <= 0.5:
        raise NotPurifiable(
            "no Bell fidelity exceeds 1/2 after twirling",
            PurificationResult(ProtocolKind.DEJMPS, None, 0.0, 0),
        )
    chain = _x_chain(twirled, tol, max_iter)
    target = None if chain.target is None else Target.from_index(chain.target)
    result = PurificationResult(
        ProtocolKind.DEJMPS, target, chain.probability, len(chain.steps), _trajectory([], chain, chain.target)
    )
    if target is None:
        raise NotConverged("DEJMPS iteration did not reach a Bell state", result)
    return result


# -- batched drivers ------------------------------------------------------


def diag_chains(d, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Run the Bell-diagonal recurrence on every row of ``d`` (shape ``(N, 4)``).

    Returns ``(target, probability)``: the Bell index reached (-1 if none within
    ``max_iter`` steps) and the product of step probabilities (0 if none).
    """
    d = np.array(d, dtype=float)
    n = d.shape[0]
    prob = np.ones(n)
    target = np.full(n, -1)
    active = np.ones(n, dtype=bool)
    for step in range(max_iter + 1):
        done = active & (d.max(axis=1) >= 1 - tol)
        target[done] = d[done].argmax(axis=1)
        active &= ~done
        if step == max_iter or not active.any():
            break
        x = d[active]
        p = (x[:, 0] + x[:, 1]) ** 2 + (x[:, 2] + x[:, 3]) ** 2
        new = np.stack([x[:, 0] ** 2 + x[:, 1] ** 2, 2 * x[:, 2] * x[:, 3], 2 * x[:, 0] * x[:, 1], x[:, 2] ** 2 + x[:, 3] ** 2], axis=1)
        dead = p <= DEGENERATE_TOL
        p = np.where(dead, 1.0, p)
        d[active] = new / p[:, None]
        prob[active] *= p
        idx = np.flatnonzero(active)
        active[idx[dead]] = False
    prob[target < 0] = 0.0
    return target, prob


def m2h2_batch(rho_x, tol=DEFAULT_TOL, max_k=64, max_iter=DEFAULT_MAX_ITER):
    """Success probabilities of :func:`run_m2h2` for a stack of X-states.

    Same row recursion and stopping rules, vectorised over the first axis;
    states that fail come back as 0.
    """
    rho = np.asarray(rho_x, dtype=complex)
    if not np.all(bm.x_state_mask(rho)):
        raise NotXState("m2h2_batch requires X-state inputs")
    n = len(rho)
    state = bm.apply_local_gate(rho, bm.HH)
    reach = np.ones(n)
    total = np.zeros(n)
    blank = np.eye(4) / 4
    for _ in range(max_k):
        active = reach >= ROW_WEIGHT_FLOOR
        if not active.any():
            break
        state[~active] = blank
        out, q_m = m2_map(state, "-")
        live = active & (q_m > DEGENERATE_TOL)
        out[~live] = blank
        target, p = diag_chains(np.real(np.diagonal(out, axis1=-2, axis2=-1)), tol, max_iter)
        total += np.where(live & (target >= 0), reach * q_m * p, 0.0)
        plus, q_p = m2_map(state, "+")
        ok = active & (q_p > DEGENERATE_TOL)
        reach = np.where(ok, reach * q_p, 0.0)
        plus[~ok] = blank
        state = bm.apply_local_gate(bm.apply_local_gate(plus, bm.G), bm.HH)
    return total


RUNNERS = {
    ProtocolKind.M2: run_m2,
    ProtocolKind.M2H: run_m2h,
    ProtocolKind.M2H2: lambda rho, **kw: run_m2h2(rho, prepare=True, **kw),
    ProtocolKind.DEJMPS: run_dejmps,
}


def success_probability(rho, kind: ProtocolKind, **kwargs) -> float:
    """Overall success probability, 0 when the protocol fails on ``rho``."""
    try:
        return RUNNERS[kind](rho, **kwargs).overall_probability
    except (NotConverged, NotPurifiable):
        return 0.0


# -- 16x16 oracle ---------------------------------------------------------

_M_MINUS = None
_M_PLUS = None


def _measurement_ops():
    global _M_MINUS, _M_PLUS
    if _M_MINUS is None:
        b = bm.BELL_BASIS
        _M_MINUS = np.outer(b[:, 0], b[:, 0].conj()) + np.outer(b[:, 1], b[:, 1].conj())
        _M_PLUS = np.outer(b[:, 3], b[:, 3].conj()) + np.outer(b[:, 2], b[:, 2].conj())
    return _M_MINUS, _M_PLUS


def _on_qubits(op, first, second):
    """Embed a two-qubit operator acting on qubits (first, second) of A1 B1 A2 B2."""
    order = [first, second] + [q for q in range(4) if q not in (first, second)]
    perm = [order.index(q) for q in range(4)]
    full = np.kron(op, np.eye(4)).reshape([2] * 8)
    return full.transpose(perm + [4 + i for i in perm]).reshape(16, 16)


def oracle_step(rho, sign_a, sign_b, outcome) -> StepOutcome:
    """Brute-force one step through the explicit four-qubit state.

    Qubits are ordered ``A1 B1 A2 B2``; the input is ``rho (x) rho`` with the
    first copy on ``A1 B1``. Node A applies ``M_{sign_a}`` to ``A1 A2``, node B
    ``M_{sign_b}`` to ``B1 B2``; ``A2 B2`` are projected on ``|jk>`` (``outcome``
    is ``"00"``, ``"01"``, ``"10"`` or ``"11"``), traced out, and
    ``V_j (x) V_{k+1}`` is applied to the kept pair. The returned probability is
    that of this single outcome.
    """
    j, k = (int(c) for c in str(outcome))
    m_minus, m_plus = _measurement_ops()
    ops = {-1: m_minus, 1: m_plus}
    rho_c = bm.computational_from_bell(rho, validate=False)
    big = np.kron(rho_c, rho_c)
    pi = _on_qubits(ops[_sign(sign_a)], 0, 2) @ _on_qubits(ops[_sign(sign_b)], 1, 3)
    big = pi @ big @ pi.conj().T
    t = big.reshape([2] * 8)[:, :, j, k, :, :, j, k].reshape(4, 4)
    corr = bm.vjk_gate(j, k).u
    t = corr @ t @ corr.conj().T
    prob = float(np.trace(t).real)
    if prob <= DEGENERATE_TOL:
        raise DegenerateBranch(f"outcome {outcome} with signs ({sign_a},{sign_b}) has probability {prob:.3e}")
    return StepOutcome(bm.bell_from_computational(t / prob, validate=False), prob)


def oracle_summed(rho, sign_a, sign_b) -> StepOutcome:
    """Mixture of the four corrected outcomes of :func:`oracle_step`, with total probability."""
    acc = np.zeros((4, 4), dtype=complex)
    total = 0.0
    for outcome in ("00", "01", "10", "11"):
        try:
            o = oracle_step(rho, sign_a, sign_b, outcome)
        except DegenerateBranch:
            continue
        acc += o.probability * o.state
        total += o.probability
    if total <= DEGENERATE_TOL:
        raise DegenerateBranch(f"signs ({sign_a},{sign_b}) have total probability {total:.3e}")
    return StepOutcome(acc / total, total)
