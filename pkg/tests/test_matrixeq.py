import numpy as np
import pytest

from bilred import (
    GenLyapProblem,
    GenSylvesterProblem,
    SolveError,
    StabilityError,
    check_generalized_stability,
    integrate_Z,
    kronecker_operator,
    min_stabilizing_gamma,
    solve_generalized_lyapunov,
    solve_generalized_sylvester,
    solve_standard_lyapunov,
)
from bilred.matrixeq import generalized_residual
from bilred.oracles import gramian_time_integral
from conftest import make_random, rel_err


class TestKroneckerOperator:
    def test_scalar_gamma_one(self):
        L = kronecker_operator(np.array([[-1.0]]), (np.array([[1.0]]),), 1.0)
        assert L == pytest.approx(np.array([[-1.0]]))

    def test_scalar_gamma_half(self):
        L = kronecker_operator(np.array([[-1.0]]), (np.array([[1.0]]),), 0.5)
        assert L == pytest.approx(np.array([[2.0]]))

    def test_diagonal_no_bilinear(self):
        A = np.diag([-1.0, -2.0])
        L = kronecker_operator(A, (np.zeros((2, 2)),), 1.0)
        assert np.allclose(np.diag(L), [-2.0, -3.0, -3.0, -4.0])
        assert np.allclose(L, np.diag(np.diag(L)))

    def test_size_cap(self):
        A = -np.eye(10)
        with pytest.raises(SolveError, match="too large"):
            kronecker_operator(A, (), 1.0, cap=5)


class TestStability:
    def test_scalar_stable(self):
        stable, mr = check_generalized_stability(np.array([[-1.0]]),
                                                 (np.array([[1.0]]),), 1.0)
        assert stable and mr == pytest.approx(-1.0)

    def test_scalar_unstable(self):
        stable, mr = check_generalized_stability(np.array([[-1.0]]),
                                                 (np.array([[1.0]]),), 0.5)
        assert not stable and mr == pytest.approx(2.0)

    def test_heat10_stable_at_paper_gammas(self, heat10):
        for gamma in (1.0, 6.0):
            stable, _ = check_generalized_stability(heat10.A, heat10.N, gamma)
            assert stable

    def test_sparse_path_matches_dense(self, heat4):
        # n=16 uses the dense path; force the sparse one and compare
        from bilred import matrixeq

        stable_d, mr_d = check_generalized_stability(heat4.A, heat4.N, 2.0)
        saved = matrixeq._DENSE_EIG_CAP
        matrixeq._DENSE_EIG_CAP = 2
        try:
            stable_s, mr_s = check_generalized_stability(heat4.A, heat4.N, 2.0)
        finally:
            matrixeq._DENSE_EIG_CAP = saved
        assert stable_s == stable_d
        assert mr_s == pytest.approx(mr_d, rel=1e-8)


class TestMinStabilizingGamma:
    def test_scalar_closed_form(self):
        g = min_stabilizing_gamma(np.array([[-1.0]]), (np.array([[1.0]]),),
                                  0.1, 4.0, tol=1e-8)
        assert g == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-6)

    def test_linear_case_returns_lo(self):
        g = min_stabilizing_gamma(-np.eye(3), (np.zeros((3, 3)),), 0.3, 2.0)
        assert g == 0.3

    def test_not_stabilizable(self):
        A = np.array([[-0.1]])
        N = (np.array([[10.0]]),)
        with pytest.raises(StabilityError, match="not stabilizable"):
            min_stabilizing_gamma(A, N, 0.5, 1.0)

    def test_heat4_matches_grid_sweep(self, heat4):
        lo, hi = 0.05, 2.0
        g_bisect = min_stabilizing_gamma(heat4.A, heat4.N, lo, hi, tol=1e-4)
        grid = np.arange(lo, hi, 1e-3)
        stable = [check_generalized_stability(heat4.A, heat4.N, g)[0]
                  for g in grid]
        g_grid = grid[int(np.argmax(stable))]
        assert abs(g_bisect - g_grid) <= 2e-3


class TestStandardLyapunov:
    def test_scalar(self):
        rep = solve_standard_lyapunov(np.array([[-1.0]]), np.array([[2.0]]))
        assert rep.X[0, 0] == pytest.approx(1.0)
        assert rep.converged

    def test_diagonal(self):
        rep = solve_standard_lyapunov(np.diag([-1.0, -2.0]), np.eye(2))
        assert np.allclose(rep.X, np.diag([0.5, 0.25]))

    def test_quadrature_oracle(self):
        sys = make_random(31, n=8)
        RHS = np.eye(8)
        rep = solve_standard_lyapunov(sys.A, RHS)
        ref = gramian_time_integral(sys.A, (np.zeros((8, 8)),), 1.0, RHS,
                                    T=50.0, dt=1e-3)
        assert rel_err(rep.X, ref) < 1e-5

    def test_singular_pair_detected(self):
        A = np.diag([-1.0, 1.0])  # eigenvalue pair sums to zero
        with pytest.raises(SolveError):
            solve_standard_lyapunov(A, np.eye(2))

    def test_adjoint_orientation(self):
        sys = make_random(32, n=5)
        RHS = sys.C.T @ sys.C
        rep = solve_standard_lyapunov(sys.A, RHS, adjoint=True)
        res = sys.A.T @ rep.X + rep.X @ sys.A + RHS
        assert np.linalg.norm(res) < 1e-10 * np.linalg.norm(RHS)


class TestGeneralizedLyapunov:
    def test_scalar_closed_form(self):
        prob = GenLyapProblem(A=np.array([[-1.0]]), N=(np.array([[1.0]]),),
                              gamma=1.0, RHS=np.array([[3.0]]))
        rep = solve_generalized_lyapunov(prob)
        assert rep.X[0, 0] == pytest.approx(3.0)

    def test_linear_limit_matches_standard(self):
        sys = make_random(33, n=7)
        RHS = sys.X0 @ sys.X0.T
        prob = GenLyapProblem(A=sys.A, N=(np.zeros((7, 7)),), gamma=1.0,
                              RHS=RHS)
        rep = solve_generalized_lyapunov(prob)
        std = solve_standard_lyapunov(sys.A, RHS)
        assert rel_err(rep.X, std.X) < 1e-12

    def test_time_integration_oracle(self):
        sys = make_random(34)
        RHS = sys.X0 @ sys.X0.T
        prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=1.0, RHS=RHS)
        rep = solve_generalized_lyapunov(prob)
        ref = gramian_time_integral(sys.A, sys.N, 1.0, RHS, T=100.0, dt=1e-3)
        assert rel_err(rep.X, ref) < 1e-4

    def test_method_agreement(self):
        sys = make_random(35, n=9, scale=0.15)
        RHS = sys.X0 @ sys.X0.T
        prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=1.2, RHS=RHS)
        direct = solve_generalized_lyapunov(prob, method="direct-kronecker")
        fixed = solve_generalized_lyapunov(prob, method="fixed-point",
                                           tol=1e-12, max_iter=400)
        assert fixed.converged
        assert rel_err(direct.X, fixed.X) < 1e-8

    def test_unstable_rejected(self):
        prob = GenLyapProblem(A=np.array([[-1.0]]), N=(np.array([[1.0]]),),
                              gamma=0.5, RHS=np.array([[1.0]]))
        with pytest.raises(StabilityError):
            solve_generalized_lyapunov(prob)

    def test_residual_contract(self):
        sys = make_random(36)
        prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=1.0,
                              RHS=sys.X0 @ sys.X0.T)
        rep = solve_generalized_lyapunov(prob)
        recomputed = generalized_residual(sys.A, sys.N, 1.0,
                                          sys.X0 @ sys.X0.T, rep.X)
        assert abs(rep.residual - recomputed) <= 1e-13
        assert np.linalg.norm(rep.X - rep.X.T) <= 1e-12 * np.linalg.norm(rep.X)

    def test_adjoint_solution(self):
        sys = make_random(37)
        RHS = sys.C.T @ sys.C
        prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=1.0, RHS=RHS,
                              adjoint=True)
        rep = solve_generalized_lyapunov(prob)
        res = generalized_residual(sys.A, sys.N, 1.0, RHS, rep.X, adjoint=True)
        assert res < 1e-10

    def test_rhs_symmetry_enforced(self):
        with pytest.raises(ValueError, match="symmetric"):
            GenLyapProblem(A=-np.eye(2), N=(np.zeros((2, 2)),), gamma=1.0,
                           RHS=np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestGeneralizedSylvester:
    def test_reduces_to_lyapunov_at_full_order(self):
        sys = make_random(38, n=5)
        RHS = sys.X0 @ sys.X0.T
        lyap = solve_generalized_lyapunov(
            GenLyapProblem(A=sys.A, N=sys.N, gamma=1.0, RHS=RHS))
        sylv = solve_generalized_sylvester(
            GenSylvesterProblem(A=sys.A, A_r=sys.A, N=sys.N, N_r=sys.N,
                                gamma=1.0, RHS=RHS))
        assert rel_err(sylv.X, lyap.X) < 1e-10

    def test_scalar(self):
        prob = GenSylvesterProblem(A=np.array([[-1.0]]), A_r=np.array([[-2.0]]),
                                   N=(np.zeros((1, 1)),), N_r=(np.zeros((1, 1)),),
                                   gamma=1.0, RHS=np.array([[3.0]]))
        rep = solve_generalized_sylvester(prob)
        assert rep.X[0, 0] == pytest.approx(1.0)

    def test_block_flow_oracle(self):
        # coupled right-upper block of the extended flow integrates to Y
        sys = make_random(39, n=4, scale=0.15)
        r = 2
        A_r = sys.A[:r, :r] - 0.5 * np.eye(r)
        N_r = tuple(Nk[:r, :r] for Nk in sys.N)
        RHS = sys.X0 @ sys.X0[:r].T
        rep = solve_generalized_sylvester(
            GenSylvesterProblem(A=sys.A, A_r=A_r, N=sys.N, N_r=N_r,
                                gamma=1.0, RHS=RHS))
        A_ext = np.block([[sys.A, np.zeros((4, r))],
                          [np.zeros((r, 4)), A_r]])
        N_ext = tuple(np.block([[Nk, np.zeros((4, r))],
                                [np.zeros((r, 4)), Nrk]])
                      for Nk, Nrk in zip(sys.N, N_r))
        K = np.vstack([sys.X0, sys.X0[:r]])
        acc = gramian_time_integral(A_ext, N_ext, 1.0, K @ K.T, T=80.0, dt=1e-3)
        assert rel_err(rep.X, acc[:4, 4:]) < 1e-4


class TestIntegrateZ:
    def test_linear_closed_form(self):
        A = -np.eye(2)
        path = integrate_Z(A, (np.zeros((2, 2)),), 1.0, np.eye(2),
                           T=1.0, dt=1e-3, store_every=100)
        for t, Z in zip(path.t, path.Z):
            assert np.allclose(Z, np.exp(-2.0 * t) * np.eye(2), atol=1e-8)

    def test_zero_initial_condition(self):
        path = integrate_Z(-np.eye(3), (0.1 * np.eye(3),), 1.0,
                           np.zeros((3, 3)), T=0.5, dt=1e-2)
        assert np.all(path.Z == 0.0)

    def test_exponential_decay(self):
        sys = make_random(40, n=5)
        K = np.eye(5)
        path = integrate_Z(sys.A, sys.N, 1.0, K, T=40.0, dt=1e-2,
                           store_every=400)
        assert np.linalg.norm(path.Z[-1]) < 1e-8 * np.linalg.norm(K)

    def test_symmetry_preserved(self):
        sys = make_random(41, n=4)
        path = integrate_Z(sys.A, sys.N, 1.0, sys.X0 @ sys.X0.T, T=1.0,
                           dt=1e-2)
        for Z in path.Z:
            assert np.allclose(Z, Z.T)


def test_integral_converges_with_horizon():
    sys = make_random(42)
    RHS = sys.X0 @ sys.X0.T
    rep = solve_generalized_lyapunov(
        GenLyapProblem(A=sys.A, N=sys.N, gamma=1.0, RHS=RHS))
    errs = []
    for T in (25.0, 50.0, 100.0):
        acc = gramian_time_integral(sys.A, sys.N, 1.0, RHS, T=T, dt=1e-3)
        errs.append(rel_err(acc, rep.X))
    assert errs[0] >= errs[1] >= errs[2] or errs[2] < 1e-10
