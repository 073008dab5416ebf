import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epp import analytic as an
from epp import bellmat as bm
from epp import protocols as pr

K = pr.ProtocolKind
angles = st.floats(0.0, math.pi / 2)


class TestRankTwo:
    @pytest.mark.parametrize("a0", [0.51, 0.6, 0.75, 0.9, 0.99, 1.0])
    @pytest.mark.parametrize("n", [0, 1, 3, 10])
    def test_telescoped_product(self, a0, n):
        traj = an.rank2_trajectory(a0, n)
        assert traj.P[-1] == pytest.approx(an.rank2_telescoped(a0, n), rel=1e-12)

    def test_trajectory_matches_iteration(self):
        traj = an.rank2_trajectory(0.7, 6)
        a = 0.7
        for k in range(1, 7):
            p = a * a + (1 - a) ** 2
            a = a * a / p
            assert traj.a[k] == pytest.approx(a, rel=1e-13)
            assert traj.p[k] == pytest.approx(p, rel=1e-13)
        assert np.allclose(traj.b, 1 / traj.a - 1)

    @given(st.floats(0.501, 1.0))
    def test_limit_is_reached(self, a0):
        assert an.rank2_trajectory(a0, 64).P[-1] == pytest.approx(an.rank2_limit(a0), abs=1e-9)

    @pytest.mark.parametrize(
        "other, combo",
        [(bm.PSI_PLUS, an.Rank2Combo.PSI_PSI), (bm.PHI_PLUS, an.Rank2Combo.PSI_PHI_OPP), (bm.PHI_MINUS, an.Rank2Combo.PSI_PHI_SAME)],
    )
    @pytest.mark.parametrize("a0", [0.6, 0.85])
    def test_combinations_against_driver(self, other, combo, a0):
        rho = a0 * bm.bell_projector(bm.PSI_MINUS) + (1 - a0) * bm.bell_projector(other)
        assert pr.run_m2(rho).overall_probability == pytest.approx(an.rank2_limit(a0, combo), abs=1e-9)

    @pytest.mark.parametrize("a0, n", [(0.5, 3), (1.2, 3), (0.7, 65), (0.7, -1)])
    def test_domain(self, a0, n):
        with pytest.raises(an.DomainError):
            an.rank2_trajectory(a0, n)


class TestMems:
    @pytest.mark.parametrize("C", [0.0, 0.2, 1 / 3, 0.5, 2 / 3, 0.8, 1.0])
    def test_concurrence_and_trace(self, C):
        rho = an.mems(C)
        bm.check_state(rho)
        assert bm.concurrence(rho) == pytest.approx(C, abs=1e-12)
        assert bm.is_x_state(rho)

    def test_types_meet_at_boundary(self):
        assert np.allclose(an.mems_type1(2 / 3), an.mems_type2(2 / 3), atol=1e-15)

    @pytest.mark.parametrize("C", [0.1, 0.5, 0.7, 0.95])
    def test_boundary_curve(self, C):
        P = bm.purity(an.mems(C))
        assert an.mems_concurrence_of_purity(P) == pytest.approx(C, abs=1e-12)

    def test_params(self):
        assert an.MemsParams(0.7).kind is an.MemsKind.TYPE_I
        assert an.MemsParams(0.5).kind is an.MemsKind.TYPE_II
        assert an.MemsParams(0.4).alpha == pytest.approx(((2 + 1.2) / 6, (2 - 1.2) / 6))
        with pytest.raises(an.DomainError):
            an.MemsParams(1.1)

    @pytest.mark.parametrize("C", [0.7, 0.8, 0.9])
    def test_type1_chain_is_row_concurrence(self, C):
        # row-l concurrence from the closed form vs the recursion C' = C^2 / (C^2 + 2 (1-C)^2)
        c = C
        for l in range(5):
            assert an.mems1_chain(C, l) == pytest.approx(c, rel=1e-12)
            c = c * c / (c * c + 2 * (1 - c) ** 2)

    @given(st.floats(2 / 3, 1.0))
    def test_type1_series_equals_two_c_minus_one(self, C):
        assert an.mems1_prob(C) == pytest.approx(2 * C - 1, abs=1e-12)

    def test_type2_chain(self):
        assert an.mems2_chain(0.4, 0) == pytest.approx(0.4)
        assert an.mems2_chain(0.4, 1) == pytest.approx(1.5 * 0.16)
        assert an.mems2_chain(2 / 3, 5) == pytest.approx(2 / 3)
        assert an.mems2_prob(0.0) == 0.0

    @pytest.mark.parametrize("C", [0.1, 0.3, 0.5, 0.75, 0.9])
    def test_series_vs_simulation(self, C):
        assert pr.run_m2h2(an.mems(C)).overall_probability == pytest.approx(an.mems_prob(C), abs=1e-8)

    def test_m2_and_dejmps_agree_on_mems(self):
        for C in (0.4, 0.6, 0.9):
            rho = an.mems(C)
            assert pr.success_probability(rho, K.M2) == pytest.approx(pr.success_probability(rho, K.DEJMPS), abs=1e-12)


class TestRankThree:
    @given(st.floats(0.05, 1.0), st.floats(-1.0, 1.0), angles, st.floats(0, 2 * math.pi))
    def test_state_properties(self, w, t, theta, phi):
        p = an.Rank3Params(w, t * w, theta, phi)
        rho = an.rank3(p)
        bm.check_state(rho)
        assert bm.is_x_state(rho)
        assert bm.concurrence(rho) == pytest.approx(p.concurrence, abs=1e-9)
        assert bm.purity(rho) == pytest.approx(p.purity, abs=1e-12)

    def test_ket_construction(self):
        # w = u = 1 gives the pure state cos(t/2)|00> + e^{i phi} sin(t/2)|11>
        theta, phi = 0.9, 0.4
        ket = np.array([math.cos(theta / 2), 0, 0, np.exp(1j * phi) * math.sin(theta / 2)])
        expected = bm.bell_from_computational(np.outer(ket, ket.conj()))
        assert np.allclose(an.rank3(an.Rank3Params(1.0, 1.0, theta, phi)), expected, atol=1e-14)

    @given(st.floats(0.05, 1.0), st.floats(0.0, 1.0), st.floats(0.1, math.pi / 2))
    def test_cp_round_trip(self, w, t, theta):
        p = an.Rank3Params(w, t * w, theta)
        found = an.rank3_from_cp(p.concurrence, p.purity, theta)
        assert any(abs(f.w - w) < 1e-7 and abs(f.u - p.u) < 1e-7 for f in found)
        C = p.concurrence
        assert any(lo - 1e-9 <= C <= hi + 1e-9 for lo, hi in an.rank3_cp_bounds(p.purity, theta))

    @given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.05, math.pi / 2), st.floats(0, 2 * math.pi))
    def test_first_step_formula(self, w, t, theta, phi):
        p = an.Rank3Params(w, t * w, theta, phi)
        rho22, rho44, prob, c_out = an.rank3_first_step(p)
        out = pr.m2_step(bm.apply_local_gate(an.rank3(p), bm.HH), "-")
        d = bm.bell_fidelities(out.state)
        assert out.probability == pytest.approx(prob, abs=1e-12)
        assert d[1] == pytest.approx(rho22, abs=1e-9)
        assert d[3] == pytest.approx(rho44, abs=1e-9)
        assert prob * c_out == pytest.approx(p.concurrence**2 / 2, abs=1e-12)

    def test_domain(self):
        with pytest.raises(an.DomainError):
            an.Rank3Params(0.5, 0.6)
        with pytest.raises(an.DomainError):
            an.Rank3Params(0.5, 0.1, theta=2.0)
        with pytest.raises(an.DomainError):
            an.rank3_cp_bounds(0.2, 1.0)
