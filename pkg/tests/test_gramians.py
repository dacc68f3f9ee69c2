import numpy as np
import pytest

from bilred import (
    BilinearSystem,
    compute_P0,
    compute_PB_feasible,
    compute_Q,
    compute_gramian_set,
    pb_lmi_max_eig,
    refine_PB_trace,
    solve_standard_lyapunov,
)
from bilred.gramians import assemble_pb_lmi
from bilred.matrixeq import generalized_residual
from bilred.oracles import gramian_time_integral, transpose_duality_gap
from conftest import make_random, rel_err


def _scalar_system(a, b, c, n_coef, x0):
    return BilinearSystem(A=[[a]], B=[[b]], C=[[c]], N=(np.array([[n_coef]]),),
                          X0=[[x0]], v0=[1.0])


class TestP0:
    def test_scalar_closed_form(self):
        sys = _scalar_system(-1.0, 0.0, 1.0, 1.0, 1.0)
        P0, rep = compute_P0(sys, np.sqrt(2.0))
        assert P0[0, 0] == pytest.approx(2.0 / 3.0)
        assert rep.converged

    def test_zero_initial_basis(self):
        sys = make_random(51)
        zeroed = BilinearSystem(A=sys.A, B=sys.B, C=sys.C, N=sys.N,
                                X0=np.zeros_like(sys.X0), v0=sys.v0)
        P0, _ = compute_P0(zeroed, 1.0)
        assert np.all(P0 == 0.0)

    def test_heat4_time_integration_oracle(self, heat4):
        P0, _ = compute_P0(heat4, 2.0)
        ref = gramian_time_integral(heat4.A, heat4.N, 2.0,
                                    heat4.X0 @ heat4.X0.T, T=100.0, dt=1e-3)
        assert rel_err(P0, ref) < 1e-4


class TestQ:
    def test_scalar_closed_form(self):
        sys = _scalar_system(-1.0, 0.0, 2.0, 1.0, 1.0)
        Q, _ = compute_Q(sys, 1.0)
        assert Q[0, 0] == pytest.approx(4.0)

    def test_zero_output_map(self):
        sys = make_random(52)
        zeroed = BilinearSystem(A=sys.A, B=sys.B, C=np.zeros_like(sys.C),
                                N=sys.N, X0=sys.X0, v0=sys.v0)
        Q, _ = compute_Q(zeroed, 1.0)
        assert np.all(Q == 0.0)

    def test_transpose_duality(self):
        for seed in (53, 54):
            assert transpose_duality_gap(make_random(seed), 1.0) < 1e-10


class TestPBFeasible:
    def test_scalar_closed_form(self):
        sys = _scalar_system(-1.0, 1.0, 1.0, 1.0, 1.0)
        PB, rep, lam = compute_PB_feasible(sys, 1.0, delta=0.0)
        assert PB[0, 0] == pytest.approx(1.0)
        assert rep.detail == "equality"  # scalar case: equality is certified
        assert lam == pytest.approx(0.0, abs=1e-12)

    def test_commuting_zero_input(self):
        # diagonal data commutes, so the equality route certifies directly
        A = np.diag([-1.0, -2.0])
        N = (np.diag([1.0, 0.5]),)
        sys = BilinearSystem(A=A, B=np.zeros((2, 1)), C=np.ones((1, 2)),
                             N=N, X0=np.eye(2), v0=[1.0, 1.0])
        PB, rep, lam = compute_PB_feasible(sys, 1.0, delta=1.0)
        ref = solve_standard_lyapunov(A, np.eye(2)).X
        # with diagonal data the bilinear term only shifts the diagonal
        expected = np.diag(1.0 / (np.array([2.0, 4.0]) - np.diag(N[0])**2))
        assert rel_err(PB, expected) < 1e-10
        assert np.linalg.eigvalsh(PB)[0] > 0
        assert lam <= 1e-8
        assert ref.shape == PB.shape

    def test_random_certified(self):
        sys = make_random(55)
        PB, rep, lam = compute_PB_feasible(sys, 1.0)
        assert lam <= 1e-8
        assert np.linalg.eigvalsh(PB)[0] > 0

    def test_two_inputs(self):
        sys = make_random(56, n=5, m=2)
        PB, rep, lam = compute_PB_feasible(sys, 1.0)
        assert lam <= 1e-8
        M = assemble_pb_lmi(sys.A, sys.B, sys.N, 1.0, PB)
        assert M.shape == (15, 15)

    def test_delta_validation(self):
        sys = make_random(57)
        with pytest.raises(ValueError):
            compute_PB_feasible(sys, 1.0, delta=-1.0)


class TestRefinePB:
    def test_trace_never_increases(self):
        sys = make_random(58)
        PB, _, _ = compute_PB_feasible(sys, 1.0)
        refined = refine_PB_trace(sys, 1.0, PB, steps=4)
        assert np.trace(refined) <= np.trace(PB) + 1e-12
        assert pb_lmi_max_eig(sys, 1.0, refined) <= 1e-8

    def test_infeasible_seed_rejected(self):
        sys = make_random(59)
        with pytest.raises(ValueError):
            refine_PB_trace(sys, 1.0, 1e-8 * np.eye(sys.n))


class TestGramianSet:
    def test_linear_limit_matches_standard_gramians(self):
        sys = make_random(60, n=5)
        lin = BilinearSystem(A=sys.A, B=sys.B, C=sys.C,
                             N=(np.zeros((5, 5)),), X0=sys.X0, v0=sys.v0)
        P0, _ = compute_P0(lin, 1.0)
        Q, _ = compute_Q(lin, 1.0)
        PB, _, _ = compute_PB_feasible(lin, 1.0, delta=0.0)
        assert rel_err(P0, solve_standard_lyapunov(lin.A, lin.X0 @ lin.X0.T).X) < 1e-10
        assert rel_err(Q, solve_standard_lyapunov(lin.A, lin.C.T @ lin.C,
                                                  adjoint=True).X) < 1e-10
        ctrb = solve_standard_lyapunov(lin.A, lin.B @ lin.B.T).X
        assert rel_err(PB, ctrb) < 1e-8

    def test_set_invariants(self):
        sys = make_random(61)
        gs = compute_gramian_set(sys, 1.0, refine_steps=2)
        for M in (gs.P0, gs.Q):
            w = np.linalg.eigvalsh(M)
            assert w[0] >= -1e-10 * max(w[-1], 1e-300)
        assert np.linalg.eigvalsh(gs.PB)[0] > 0
        assert gs.lmi_max_eig <= 1e-8
        assert gs.reports["P0"].residual <= 1e-10
        assert gs.reports["Q"].residual <= 1e-10

    def test_residuals_recomputable(self):
        sys = make_random(62)
        gs = compute_gramian_set(sys, 1.3)
        res = generalized_residual(sys.A, sys.N, 1.3, sys.X0 @ sys.X0.T, gs.P0)
        assert res <= 1e-10

    def test_json_round_trip(self):
        sys = make_random(63)
        gs = compute_gramian_set(sys, 1.0)
        from bilred import GramianSet

        back = GramianSet.from_dict(gs.to_dict())
        assert rel_err(back.P0, gs.P0) == 0.0
        assert back.gamma == gs.gamma
        assert back.lmi_max_eig == gs.lmi_max_eig
