"""Two-qubit density matrices in the Bell basis.

States are plain ``(4, 4)`` complex numpy arrays. The canonical storage basis
is the Bell basis in the fixed order

    0 <-> |Psi->,  1 <-> |Phi->,  2 <-> |Phi+>,  3 <-> |Psi+>

with ``|Psi+-> = (|01> +- |10>)/sqrt(2)`` and ``|Phi+-> = (|00> +- |11>)/sqrt(2)``.
Computational-basis matrices (``|00>, |01>, |10>, |11>``) only appear at the
edges: random state generation, gate definitions and file input.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PSI_MINUS, PHI_MINUS, PHI_PLUS, PSI_PLUS = 0, 1, 2, 3
BELL_LABELS = ("PsiMinus", "PhiMinus", "PhiPlus", "PsiPlus")

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
INPUT_TOL = 1e-10
X_STATE_TOL = 1e-10

_s = 1 / np.sqrt(2)
# columns are the Bell vectors written in the computational basis
BELL_BASIS = np.column_stack(
    [
        [0, _s, -_s, 0],  # Psi-
        [_s, 0, 0, -_s],  # Phi-
        [_s, 0, 0, _s],  # Phi+
        [0, _s, _s, 0],  # Psi+
    ]
).astype(complex)

# nonzero pattern of an X-state: the {0,3}x{0,3} and {1,2}x{1,2} blocks
X_MASK = np.zeros((4, 4), dtype=bool)
X_MASK[np.ix_([0, 3], [0, 3])] = True
X_MASK[np.ix_([1, 2], [1, 2])] = True

_SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(_SIGMA_Y, _SIGMA_Y)


class InvalidState(ValueError):
    """Raised when a matrix is not a valid two-qubit density matrix."""


def bell_projector(index: int) -> np.ndarray:
    """Return ``|B><B|`` for the Bell state at ``index`` (Bell basis)."""
    m = np.zeros((4, 4), dtype=complex)
    m[index, index] = 1.0
    return m


def ket_projector(vec) -> np.ndarray:
    """Projector onto a computational-basis ket, returned in the Bell basis."""
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return bell_from_computational(np.outer(v, v.conj()), validate=False)


def check_state(m, tol_herm=HERMITIAN_TOL, tol_trace=TRACE_TOL, tol_psd=PSD_TOL):
    """Raise :class:`InvalidState` unless ``m`` is a Hermitian, unit-trace, PSD 4x4 matrix."""
    m = np.asarray(m)
    if m.shape != (4, 4):
        raise InvalidState(f"expected a 4x4 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidState("matrix contains non-finite entries")
    herm = np.max(np.abs(m - m.conj().T))
    if herm > tol_herm:
        raise InvalidState(f"matrix is not Hermitian (deviation {herm:.3e})")
    tr = np.trace(m)
    if abs(tr - 1) > tol_trace:
        raise InvalidState(f"trace is {tr.real:.15g}, expected 1")
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
    if lam < -tol_psd:
        raise InvalidState(f"matrix is not positive semidefinite (eigenvalue {lam:.3e})")
    return m


def bell_from_computational(rho, validate=True) -> np.ndarray:
    """Change basis from the computational to the Bell basis.

    Works on a single matrix or a stack ``(..., 4, 4)``; validation only runs
    for single matrices.
    """
    rho = np.asarray(rho, dtype=complex)
    if validate:
        check_state(rho, tol_herm=INPUT_TOL, tol_trace=INPUT_TOL)
    return BELL_BASIS.conj().T @ rho @ BELL_BASIS


def computational_from_bell(rho, validate=True) -> np.ndarray:
    """Inverse of :func:`bell_from_computational`."""
    rho = np.asarray(rho, dtype=complex)
    if validate:
        check_state(rho, tol_herm=INPUT_TOL, tol_trace=INPUT_TOL)
    return BELL_BASIS @ rho @ BELL_BASIS.conj().T


def _x_concurrence(r):
    # closed form for computational-basis X-states
    a = np.abs(r[..., 1, 2]) - np.sqrt(np.clip(r[..., 0, 0].real * r[..., 3, 3].real, 0.0, None))
    b = np.abs(r[..., 0, 3]) - np.sqrt(np.clip(r[..., 1, 1].real * r[..., 2, 2].real, 0.0, None))
    return np.clip(2 * np.maximum(a, b), 0.0, 1.0)


def concurrence(rho) -> float | np.ndarray:
    """Wootters concurrence of a Bell-basis state (or a stack of them).

    X-states use the exact closed form. Otherwise the eigenvalues of
    ``rho (Y x Y) rho* (Y x Y)`` are computed in the computational basis, with
    tiny negative eigenvalues from roundoff clamped to zero.
    """
    rho = np.asarray(rho)
    r = computational_from_bell(rho, validate=False)
    flipped = _YY @ r.conj() @ _YY
    ev = np.linalg.eigvals(r @ flipped)
    if not np.all(np.isfinite(ev)):
        raise FloatingPointError("eigen-solve for concurrence produced non-finite values")
    lam = np.sqrt(np.clip(ev.real, 0.0, None))
    lam = -np.sort(-lam, axis=-1)
    c = np.clip(lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3], 0.0, 1.0)
    xs = np.all(np.abs(rho[..., ~X_MASK]) <= X_STATE_TOL, axis=-1)
    c = np.where(xs, _x_concurrence(r), c)
    return float(c) if np.ndim(c) == 0 else c


def purity(rho) -> float:
    """Tr(rho^2)."""
    rho = np.asarray(rho)
    return float(np.real(np.einsum("ij,ji->", rho, rho)))


def bell_fidelities(rho) -> np.ndarray:
    """Fidelities with the four Bell states, i.e. the real Bell-basis diagonal."""
    return np.real(np.diagonal(np.asarray(rho), axis1=-2, axis2=-1)).copy()


def is_x_state(rho, tol=X_STATE_TOL) -> bool:
    """True iff every entry outside the X-state blocks has modulus <= ``tol``."""
    rho = np.asarray(rho)
    return bool(np.all(np.abs(rho[~X_MASK]) <= tol))


def x_state_mask(rho, tol=X_STATE_TOL) -> np.ndarray:
    """Vectorised :func:`is_x_state` over a stack ``(N, 4, 4)``."""
    rho = np.asarray(rho)
    return np.all(np.abs(rho[:, ~X_MASK]) <= tol, axis=-1)


# -- local gates ----------------------------------------------------------


@dataclass(frozen=True)
class LocalGate:
    """A separable two-qubit unitary ``a (x) b``.

    ``u`` is stored in the computational basis; ``bell`` is the same operator
    expressed in the Bell basis.
    """

    label: str
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        if u.shape != (4, 4) or not np.allclose(u @ u.conj().T, np.eye(4), atol=1e-12, rtol=0):
            raise ValueError(f"gate {self.label!r} is not a 4x4 unitary")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "_bell", BELL_BASIS.conj().T @ u @ BELL_BASIS)

    @property
    def bell(self) -> np.ndarray:
        return self._bell

    @classmethod
    def product(cls, label, a, b):
        return cls(label, np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)))


_H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]])
_Z = np.diag([1, -1])
_SQRT_IX = (np.eye(2) + 1j * _X) / np.sqrt(2)


def v_gate(j: int) -> np.ndarray:
    """Single-qubit correction ``V_j = |1><j+1| + i |0><j|`` (indices mod 2)."""
    e = np.eye(2)
    return np.outer(e[1], e[(j + 1) % 2]) + 1j * np.outer(e[0], e[j % 2])


HH = LocalGate.product("HH", _H, _H)
G = LocalGate.product("G", _SQRT_IX, _SQRT_IX)
SIGMA_PAIR = LocalGate.product("SigmaPair", np.eye(2), _X @ _Z)


def vjk_gate(j: int, k: int) -> LocalGate:
    """Outcome correction ``V_j (x) V_{k+1}`` applied after measuring ``|jk>``."""
    return LocalGate.product(f"VJK({j},{k})", v_gate(j), v_gate(k + 1))


def apply_local_gate(rho, gate: LocalGate) -> np.ndarray:
    """Conjugate a Bell-basis state (or stack) by ``gate``."""
    u = gate.bell
    return u @ np.asarray(rho) @ u.conj().T


# -- state files ----------------------------------------------------------


def state_to_json(rho, basis="bell") -> dict:
    m = np.asarray(rho)
    return {"basis": basis, "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in m]}


def state_from_json(doc: dict) -> np.ndarray:
    """Parse a state document and return a validated Bell-basis matrix."""
    basis = doc.get("basis")
    if basis not in ("bell", "computational"):
        raise InvalidState(f"unknown basis {basis!r}")
    raw = np.asarray(doc["matrix"], dtype=float)
    if raw.shape != (4, 4, 2):
        raise InvalidState(f"matrix must be 4x4 of [re, im] pairs, got shape {raw.shape}")
    m = raw[..., 0] + 1j * raw[..., 1]
    if basis == "computational":
        m = bell_from_computational(m)
    return check_state(m, tol_herm=INPUT_TOL, tol_trace=INPUT_TOL)


def load_state(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return state_from_json(json.load(fh))


def save_state(path, rho, basis="bell"):
    Path(path).write_text(json.dumps(state_to_json(rho, basis)), encoding="utf-8")
