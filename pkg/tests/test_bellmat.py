import json

import numpy as np
import pytest
from hypothesis import given

from epp import bellmat as bm
from conftest import random_state, states

s = 1 / np.sqrt(2)
KETS = {
    bm.PSI_MINUS: np.array([0, s, -s, 0]),
    bm.PHI_MINUS: np.array([s, 0, 0, -s]),
    bm.PHI_PLUS: np.array([s, 0, 0, s]),
    bm.PSI_PLUS: np.array([0, s, s, 0]),
}


def test_basis_is_unitary():
    assert np.allclose(bm.BELL_BASIS.conj().T @ bm.BELL_BASIS, np.eye(4), atol=1e-15)


@pytest.mark.parametrize("index", range(4))
def test_bell_ket_maps_to_projector(index):
    ket = KETS[index]
    rho = bm.bell_from_computational(np.outer(ket, ket.conj()))
    assert np.allclose(rho, bm.bell_projector(index), atol=1e-15)
    assert bm.concurrence(rho) == pytest.approx(1.0, abs=1e-12)
    assert bm.purity(rho) == pytest.approx(1.0)


def test_ket01_in_bell_basis():
    m = bm.ket_projector([0, 1, 0, 0])
    # |01> = (Psi+ + Psi-)/sqrt(2)
    expected = np.zeros((4, 4))
    expected[np.ix_([0, 3], [0, 3])] = 0.5
    assert np.allclose(m, expected)


@given(states())
def test_round_trip(rho):
    back = bm.bell_from_computational(bm.computational_from_bell(rho))
    assert np.allclose(back, rho, atol=1e-14)


def test_identity_and_product_states_have_zero_concurrence():
    assert bm.concurrence(np.eye(4) / 4) == 0.0
    assert bm.purity(np.eye(4) / 4) == pytest.approx(0.25)
    assert bm.concurrence(bm.ket_projector([1, 0, 0, 0])) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("theta", [0.0, 0.3, np.pi / 4, 1.2, np.pi / 2])
def test_pure_state_concurrence(theta):
    # cos t |00> + sin t |11> has concurrence |sin 2t|
    ket = np.array([np.cos(theta), 0, 0, np.sin(theta)])
    rho = bm.bell_from_computational(np.outer(ket, ket))
    assert bm.concurrence(rho) == pytest.approx(abs(np.sin(2 * theta)), abs=1e-7)


@pytest.mark.parametrize("f", [0.1, 0.25, 0.5, 0.6, 0.9, 1.0])
def test_werner_concurrence(f):
    rho = f * bm.bell_projector(bm.PSI_MINUS) + (1 - f) * (np.eye(4) - bm.bell_projector(bm.PSI_MINUS)) / 3
    assert bm.concurrence(rho) == pytest.approx(max(0.0, 2 * f - 1), abs=1e-12)


@given(states())
def test_concurrence_stack_matches_scalar(rho):
    stack = np.stack([rho, rho.conj()])
    c = bm.concurrence(stack)
    assert c.shape == (2,)
    assert c[0] == pytest.approx(bm.concurrence(rho), abs=1e-12)
    assert 0 <= c[0] <= 1


@given(states(x_only=True))
def test_x_state_closed_form_agrees_with_eigen_route(rho):
    # a tiny off-X entry forces the general branch
    nudged = rho.copy()
    nudged[0, 1] = nudged[1, 0] = 1e-9
    assert bm.concurrence(rho) == pytest.approx(bm.concurrence(nudged), abs=1e-6)


def test_check_state_rejects():
    with pytest.raises(bm.InvalidState, match="Hermitian"):
        bm.check_state(np.triu(np.ones((4, 4))) / 4)
    with pytest.raises(bm.InvalidState, match="trace"):
        bm.check_state(np.eye(4) / 2)
    with pytest.raises(bm.InvalidState, match="positive"):
        bm.check_state(np.diag([0.5, 0.5, 0.5, -0.5]))
    with pytest.raises(bm.InvalidState, match="4x4"):
        bm.check_state(np.eye(3) / 3)
    with pytest.raises(bm.InvalidState, match="non-finite"):
        bm.check_state(np.full((4, 4), np.nan))


def test_x_state_detection(rng):
    rho = random_state(rng)
    assert not bm.is_x_state(rho)
    x = rho.copy()
    x[~bm.X_MASK] = 0
    assert bm.is_x_state(x)
    assert list(bm.x_state_mask(np.stack([rho, x]))) == [False, True]


class TestGates:
    def test_hh_permutes_bell_states(self):
        u = bm.HH.bell
        # Psi- -> -Psi-, Phi- <-> Psi+, Phi+ fixed
        expected = np.zeros((4, 4))
        expected[0, 0] = -1
        expected[3, 1] = expected[1, 3] = 1
        expected[2, 2] = 1
        assert np.allclose(u, expected, atol=1e-15)

    def test_g_swaps_phi_plus_and_psi_plus(self):
        u = bm.G.bell
        assert np.allclose(u[:, bm.PSI_PLUS], 1j * np.eye(4)[bm.PHI_PLUS])
        assert np.allclose(u[:, bm.PHI_PLUS], 1j * np.eye(4)[bm.PSI_PLUS])
        assert np.allclose(u[:, bm.PSI_MINUS], np.eye(4)[bm.PSI_MINUS])
        assert np.allclose(u[:, bm.PHI_MINUS], np.eye(4)[bm.PHI_MINUS])

    @pytest.mark.parametrize("j", [0, 1])
    def test_v_gate_unitary(self, j):
        v = bm.v_gate(j)
        assert np.allclose(v @ v.conj().T, np.eye(2))

    def test_non_unitary_gate_rejected(self):
        with pytest.raises(ValueError):
            bm.LocalGate("bad", 2 * np.eye(4))

    @given(states())
    def test_local_gates_preserve_spectrum_and_concurrence(self, rho):
        for gate in (bm.HH, bm.G, bm.SIGMA_PAIR, bm.vjk_gate(1, 0)):
            out = bm.apply_local_gate(rho, gate)
            assert np.allclose(np.linalg.eigvalsh(out), np.linalg.eigvalsh(rho), atol=1e-12)
            assert bm.concurrence(out) == pytest.approx(bm.concurrence(rho), abs=1e-7)


class TestStateFiles:
    def test_round_trip(self, tmp_path, rng):
        rho = random_state(rng)
        path = tmp_path / "s.json"
        bm.save_state(path, rho)
        assert np.allclose(bm.load_state(path), rho, atol=1e-15)

    def test_computational_input(self, tmp_path):
        ket = KETS[bm.PSI_PLUS]
        doc = bm.state_to_json(np.outer(ket, ket), basis="computational")
        assert np.allclose(bm.state_from_json(doc), bm.bell_projector(bm.PSI_PLUS), atol=1e-15)

    @pytest.mark.parametrize(
        "doc",
        [
            {"basis": "polar", "matrix": []},
            {"basis": "bell", "matrix": [[0, 0]]},
            {"basis": "bell", "matrix": [[[0.5, 0]] * 4] * 4},
        ],
    )
    def test_bad_documents(self, doc):
        with pytest.raises(bm.InvalidState):
            bm.state_from_json(json.loads(json.dumps(doc)))
