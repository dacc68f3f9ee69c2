"""Gramians for the two subsystems, with feasibility certificates.

Three matrices drive the reduction:

* ``P0``  - reachability-type Gramian of the homogeneous subsystem,
  solving ``A P + P A^T + (1/gamma^2) sum N_k P N_k^T = -X0 X0^T``;
* ``Q``   - observability Gramian shared by both subsystems, solving the
  adjoint equation with right-hand side ``C^T C``;
* ``PB``  - reachability Gramian of the inhomogeneous subsystem, a positive
  definite *feasible point* of the matrix inequality whose Schur-complement
  form is the block LMI
  ``[[A P + P A^T + B B^T, (1/gamma) P N_k^T], [(1/gamma) N_k P, -P]] <= 0``.

``PB`` is computed without an interior-point SDP solver.  A plain equality
solve is tried first and certified against the assembled LMI; it is only
guaranteed feasible when the bilinear terms are normal in the metric of
the solution, so two further constructions back it up:

* the *rank-m fixed point*: in terms of ``X = PB^{-1}`` the LMI reads
  ``A^T X + X A + (1/gamma^2) sum N_k^T X N_k + X B B^T X <= 0``; choosing
  ``X`` as the solution of the adjoint equality with right-hand side
  ``Omega Omega^T + Xi`` and enforcing ``Omega = X B`` (a Newton solve in
  the ``n x m`` unknown ``Omega``) makes the quadratic term cancel exactly
  against ``Omega Omega^T``, leaving slack ``Xi >= 0``.  The slack shape is
  then ramped up inside the weak subspace of the equality Gramian, which
  drives the spectrum of ``PB`` down toward reachability-like decay while
  keeping feasibility exact (continuation in the slack magnitude).
* the *scaled dual* point: ``X = eta X1`` with
  ``A^T X1 + X1 A + (1/gamma^2) sum N_k^T X1 N_k = -I`` is feasible for
  every ``eta <= 1/lambda_max(X1 B B^T X1)``; it always exists under
  generalized stability but has a flat spectrum, so it is the fallback.

Every accepted ``PB`` carries its assembled-LMI certificate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spla

from .errors import FeasibilityError, SolveError, StabilityError
from .matrixeq import (
    GenLyapProblem,
    PrefactoredGenLyapSolver,
    SolveReport,
    check_generalized_stability,
    solve_generalized_lyapunov,
)

DEFAULT_LMI_TOL = 1e-8


def compute_P0(sys, gamma, tol=1e-10, method="auto", check_stability=True):
    """Reachability-type Gramian of the homogeneous subsystem."""
    prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=gamma,
                          RHS=sys.X0 @ sys.X0.T, adjoint=False)
    report = solve_generalized_lyapunov(prob, tol=tol, method=method,
                                        check_stability=check_stability)
    return report.X, report


def compute_Q(sys, gamma, tol=1e-10, method="auto", check_stability=True):
    """Observability Gramian (adjoint equation, right-hand side ``C^T C``)."""
    prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=gamma,
                          RHS=sys.C.T @ sys.C, adjoint=True)
    report = solve_generalized_lyapunov(prob, tol=tol, method=method,
                                        check_stability=check_stability)
    return report.X, report


def assemble_pb_lmi(A, B, N, gamma, PB):
    """Assemble the block LMI matrix certifying feasibility of ``PB``.

    Layout (one block row/column per bilinear term):

        [ A P + P A^T + B B^T   (1/g) P N_1^T ... (1/g) P N_m^T ]
        [ (1/g) N_1 P           -P                              ]
        [ ...                              ...                  ]
        [ (1/g) N_m P                                -P         ]
    """
    n = A.shape[0]
    m = len(N)
    M = np.zeros(((m + 1) * n, (m + 1) * n))
    M[:n, :n] = A @ PB + PB @ A.T + B @ B.T
    for k, Nk in enumerate(N):
        off = (k + 1) * n
        blk = (Nk @ PB) / gamma
        M[off:off + n, :n] = blk
        M[:n, off:off + n] = blk.T
        M[off:off + n, off:off + n] = -PB
    return 0.5 * (M + M.T)


def pb_lmi_max_eig(sys, gamma, PB):
    """Largest eigenvalue of the assembled feasibility LMI (must be <= tol)."""
    M = assemble_pb_lmi(sys.A, sys.B, sys.N, gamma, PB)
    return float(np.linalg.eigvalsh(M)[-1])


def _spd_inverse(X):
    w, U = np.linalg.eigh(0.5 * (X + X.T))
    if w[0] <= 0:
        raise SolveError("matrix to invert is not positive definite")
    return (U / w) @ U.T


def _reg_inverse(P, rel):
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    w = np.maximum(w, rel * max(w[-1], 1e-300))
    return (U / w) @ U.T


class _RankMFixedPoint:
    """Newton solver for ``Omega = X(Omega Omega^T + Xi) B``.

    ``X(W)`` solves the adjoint equality with right-hand side ``W`` through
    a prefactored operator.  The Jacobian of the map is assembled from
    ``n*m`` forward solves done once up front: with ``G_ak`` the forward
    solution for right-hand side ``e_a (B e_k)^T``, adjointness of the two
    operator orientations gives

        dF[H]_(a,k) = H_(a,k) - < H, (G_ak + G_ak^T) Omega >,

    so every Newton iteration carries an exact Jacobian at the cost of a
    few small matrix products.
    """

    def __init__(self, adjoint_solver, forward_solver, B):
        self.solver = adjoint_solver
        self.B = B
        self.n, self.m = B.shape
        self._gsym = []
        for k in range(self.m):
            bk = B[:, k]
            for a in range(self.n):
                rhs = np.zeros((self.n, self.n))
                rhs[a, :] = bk
                G = forward_solver.solve(rhs)
                self._gsym.append(G + G.T)

    def _residual(self, Om, Xi):
        X = self.solver.solve(Om @ Om.T + Xi)
        return Om - X @ self.B, X

    def _jacobian(self, Om):
        nm = self.n * self.m
        J = np.eye(nm)
        for row, Gs in enumerate(self._gsym):
            # _gsym is ordered k-major to match Fortran raveling of (n, m)
            J[row, :] -= (Gs @ Om).ravel(order="F")
        return J

    def solve(self, Om0, Xi, max_iter=40, tol=1e-10):
        Om = Om0.copy()
        f, X = self._residual(Om, Xi)
        for it in range(max_iter):
            fn = np.linalg.norm(f)
            if fn < tol * max(np.linalg.norm(Om), 1.0):
                return X, Om
            try:
                step = np.linalg.solve(self._jacobian(Om),
                                       -f.ravel(order="F"))
            except np.linalg.LinAlgError:
                raise SolveError("fixed-point Jacobian is singular")
            step = step.reshape((self.n, self.m), order="F")
            alpha, hit = 1.0, None
            for _ in range(25):
                f_new, X_new = self._residual(Om + alpha * step, Xi)
                if np.linalg.norm(f_new) < (1.0 - 1e-4 * alpha) * fn:
                    hit = (Om + alpha * step, f_new, X_new)
                    break
                alpha *= 0.5
            if hit is None:
                raise SolveError("fixed-point iteration stalled")
            Om, f, X = hit
        raise SolveError("fixed-point iteration did not converge")


def _weak_shape(P, weak_rel=1e-4, floor_rel=1e-12):
    """Inverse of ``P`` restricted to its weak eigenspace, spectral norm 1."""
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    weak = w < weak_rel * max(w[-1], 1e-300)
    if not np.any(weak):
        return None
    Uw = U[:, weak]
    inv_w = 1.0 / np.maximum(w[weak], floor_rel * max(w[-1], 1e-300))
    S = (Uw * inv_w) @ Uw.T
    return S / np.linalg.norm(S, 2)


def _pb_rank_m_fixed_point(sys, gamma, delta, seed_gramian, lmi_tol,
                           reshape_rounds=2, time_budget=30.0):
    """Fast-decaying feasible ``PB`` via the shaped rank-m fixed point.

    The base fixed point (identity slack only) is already feasible; the
    slack-shaping continuation improves the eigenvalue decay until the
    round/time budget runs out, keeping the best converged iterate.
    """
    import time as _time

    adjoint_solver = PrefactoredGenLyapSolver(sys.A, sys.N, gamma, adjoint=True)
    forward_solver = PrefactoredGenLyapSolver(sys.A, sys.N, gamma, adjoint=False)
    newton = _RankMFixedPoint(adjoint_solver, forward_solver, sys.B)
    n = sys.n
    base = delta * np.eye(n)
    deadline = _time.monotonic() + time_budget

    Om = _reg_inverse(seed_gramian, 1e-2) @ sys.B
    X, Om = newton.solve(Om, base)
    if np.linalg.eigvalsh(X)[0] <= 0:
        raise SolveError("rank-m fixed point lost positive definiteness")

    # the equality Gramian has reachability-like decay: its weak subspace
    # tells where the slack may grow without destroying the fixed point.
    # Each round ramps a new shape on top of the slack accumulated so far.
    slack = base.copy()
    shape_src = seed_gramian
    best_X, best_Om = X, Om
    best_trace = float(np.trace(_spd_inverse(X)))
    for _ in range(reshape_rounds):
        if _time.monotonic() > deadline:
            break
        shape = _weak_shape(shape_src)
        if shape is None:
            break
        kappa, factor = 1.0, 10.0
        kappa_ok = 0.0
        attempts = 0
        while factor > 1.05 and attempts < 60:
            if _time.monotonic() > deadline:
                break
            attempts += 1
            try:
                X_new, Om_new = newton.solve(Om, slack + kappa * shape)
                if np.linalg.eigvalsh(X_new)[0] <= 0:
                    raise SolveError("not PD")
                X, Om = X_new, Om_new
                kappa_ok = kappa
                kappa *= factor
            except SolveError:
                kappa /= factor
                factor = np.sqrt(factor)
                kappa *= factor
        slack = slack + kappa_ok * shape
        trace = float(np.trace(_spd_inverse(X)))
        if trace < best_trace:
            best_X, best_Om, best_trace = X, Om, trace
        shape_src = _spd_inverse(X)

    PB = _spd_inverse(best_X)
    lam = pb_lmi_max_eig(sys, gamma, PB)
    if lam > lmi_tol:
        raise FeasibilityError(
            f"rank-m fixed point failed certification ({lam:.3e})"
        )
    # residual of the fixed-point equation at the accepted iterate
    resid = float(np.linalg.norm(best_Om - best_X @ sys.B)
                  / max(np.linalg.norm(best_Om), 1.0))
    return PB, lam, resid


def _pb_scaled_dual(sys, gamma, lmi_tol, solve_tol):
    """Always-feasible fallback: rescaled identity-forced dual solution."""
    dual = GenLyapProblem(A=sys.A, N=sys.N, gamma=gamma,
                          RHS=np.eye(sys.n), adjoint=True)
    rep = solve_generalized_lyapunov(dual, tol=solve_tol, check_stability=False)
    X1 = rep.X
    BBt = sys.B @ sys.B.T
    M = X1 @ BBt @ X1
    wmax = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    eta = (1.0 - 1e-7) / wmax if wmax > 0 else 1.0
    PB = _spd_inverse(eta * X1)
    lam = pb_lmi_max_eig(sys, gamma, PB)
    if lam > lmi_tol:
        raise FeasibilityError(
            f"LMI infeasible at tolerance: max eigenvalue {lam:.3e} > {lmi_tol:.1e}"
        )
    return PB, rep, lam


def compute_PB_feasible(sys, gamma, delta=None, tol=DEFAULT_LMI_TOL,
                        solve_tol=1e-12, check_stability=True,
                        reshape_rounds=2, time_budget=30.0):
    """Positive definite feasible Gramian for the inhomogeneous subsystem.

    First solves the equality
    ``A P + P A^T + (1/gamma^2) sum N_k P N_k^T = -(B B^T + delta I)``
    and accepts it when the assembled LMI certifies feasibility.  When the
    certificate fails, the shaped rank-m fixed point takes over, and the
    rescaled dual construction is the last resort (see module docstring).
    ``delta > 0`` forces strict positive definiteness when ``B B^T`` is
    rank deficient.

    Returns ``(PB, report, lmi_max_eig)``.
    """
    BBt = sys.B @ sys.B.T
    bb_norm = float(np.linalg.norm(BBt, 2)) if BBt.size else 0.0
    if delta is None:
        delta = 1e-8 * bb_norm
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if check_stability:
        stable, max_real = check_generalized_stability(sys.A, sys.N, gamma)
        if not stable:
            raise StabilityError(
                f"operator not generalized-stable at gamma={gamma} "
                f"(max real part {max_real:.3e})"
            )

    rhs = BBt + delta * np.eye(sys.n)
    prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=gamma, RHS=rhs, adjoint=False)
    eq_report = solve_generalized_lyapunov(prob, tol=solve_tol,
                                           check_stability=False)
    candidate = eq_report.X
    lam = pb_lmi_max_eig(sys, gamma, candidate)
    if lam <= tol and np.linalg.eigvalsh(candidate)[0] > 0:
        report = SolveReport(X=candidate, residual=eq_report.residual,
                             method=eq_report.method,
                             iterations=eq_report.iterations, converged=True,
                             tol=solve_tol, detail="equality")
        return candidate, report, lam

    pd_floor = max(delta, 1e-10 * bb_norm, 1e-14)
    try:
        PB, lam, resid = _pb_rank_m_fixed_point(sys, gamma, pd_floor,
                                                candidate, tol,
                                                reshape_rounds=reshape_rounds,
                                                time_budget=time_budget)
        report = SolveReport(X=PB, residual=resid, method="fixed-point",
                             iterations=0, converged=resid <= 1e-9,
                             tol=1e-9, detail="rank-m-riccati")
        return PB, report, lam
    except (SolveError, FeasibilityError):
        pass

    PB, rep, lam = _pb_scaled_dual(sys, gamma, tol, solve_tol)
    report = SolveReport(X=PB, residual=rep.residual, method=rep.method,
                         iterations=rep.iterations, converged=True,
                         tol=solve_tol, detail="scaled-dual")
    return PB, report, lam


def pb_equation_gap(sys, gamma, PB):
    """Relative slack of the inequality in equation form (diagnostic)."""
    c = 1.0 / gamma**2
    R = sys.A @ PB + PB @ sys.A.T + sys.B @ sys.B.T
    for Nk in sys.N:
        R += c * (Nk @ PB @ Nk.T)
    return float(np.linalg.norm(R, "fro")
                 / max(np.linalg.norm(sys.B @ sys.B.T, "fro"), 1e-300))


def refine_PB_trace(sys, gamma, PB_seed, steps=8, tol=DEFAULT_LMI_TOL,
                    solve_tol=1e-12):
    """Best-effort trace reduction over feasible Gramian candidates.

    Candidates come from (a) re-solving the equality with shrinking
    regularizations ``B B^T + delta_j I``, (b) extra continuation rounds of
    the shaped rank-m fixed point restarted from the seed, and (c) convex
    combinations of feasible candidates (the feasible set is convex).
    Only LMI-certified positive definite candidates are accepted, and only
    when they lower the trace, so the result is feasible with
    ``tr(result) <= tr(PB_seed)``.
    """
    lam_seed = pb_lmi_max_eig(sys, gamma, PB_seed)
    if lam_seed > tol:
        raise ValueError("PB_seed is not LMI-feasible at the given tolerance")
    BBt = sys.B @ sys.B.T
    bb_norm = float(np.linalg.norm(BBt, 2)) if BBt.size else 0.0
    best = PB_seed
    best_trace = float(np.trace(PB_seed))
    feasible = [PB_seed]

    def consider(P):
        nonlocal best, best_trace
        tr = float(np.trace(P))
        if not np.isfinite(tr) or tr >= best_trace:
            return False
        if np.linalg.eigvalsh(0.5 * (P + P.T))[0] <= 0:
            return False
        if pb_lmi_max_eig(sys, gamma, P) > tol:
            return False
        best, best_trace = P, tr
        feasible.append(P)
        return True

    deltas = [bb_norm * 10.0 ** (-2 * (j + 1)) for j in range(max(steps // 2, 1))]
    deltas.append(0.0)
    for dj in deltas:
        try:
            prob = GenLyapProblem(A=sys.A, N=sys.N, gamma=gamma,
                                  RHS=BBt + dj * np.eye(sys.n), adjoint=False)
            cand = solve_generalized_lyapunov(prob, tol=solve_tol,
                                              check_stability=False).X
        except (SolveError, StabilityError, ValueError):
            continue
        consider(cand)

    if steps > 0:
        try:
            cand, _, _ = _pb_rank_m_fixed_point(
                sys, gamma, max(1e-10 * bb_norm, 1e-14), best, tol,
                reshape_rounds=max(steps // 4, 1))
            consider(cand)
        except (SolveError, FeasibilityError):
            pass

    if len(feasible) >= 2:
        P_a, P_b = feasible[-1], feasible[-2]
        for alpha in (0.25, 0.5, 0.75):
            consider(alpha * P_a + (1.0 - alpha) * P_b)
    return best


@dataclass(frozen=True)
class GramianSet:
    """The three Gramians at a common gamma, with solver diagnostics."""

    P0: np.ndarray
    Q: np.ndarray
    PB: np.ndarray
    gamma: float
    reports: dict
    lmi_max_eig: float

    def to_dict(self, include_matrices=True):
        out = {
            "gamma": self.gamma,
            "lmi_max_eig": self.lmi_max_eig,
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
        }
        if include_matrices:
            out["P0"] = self.P0.tolist()
            out["Q"] = self.Q.tolist()
            out["PB"] = self.PB.tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        reports = {
            k: SolveReport(X=np.zeros((0, 0)), residual=v["residual"],
                           method=v["method"], iterations=v["iterations"],
                           converged=v["converged"], tol=v["tol"],
                           detail=v.get("detail", ""))
            for k, v in data["reports"].items()
        }
        return cls(P0=np.array(data["P0"]), Q=np.array(data["Q"]),
                   PB=np.array(data["PB"]), gamma=data["gamma"],
                   reports=reports, lmi_max_eig=data["lmi_max_eig"])


def compute_gramian_set(sys, gamma, tol=1e-10, lmi_tol=DEFAULT_LMI_TOL,
                        delta=None, refine_steps=0, reshape_rounds=2):
    """Compute ``(P0, Q, PB)`` at one shared gamma.

    Generalized stability is verified once up front.  ``refine_steps > 0``
    runs the additional trace-reduction pass on ``PB``.
    """
    stable, max_real = check_generalized_stability(sys.A, sys.N, gamma)
    if not stable:
        raise StabilityError(
            f"operator not generalized-stable at gamma={gamma} "
            f"(max real part {max_real:.3e})"
        )
    P0, rep_p0 = compute_P0(sys, gamma, tol=tol, check_stability=False)
    Q, rep_q = compute_Q(sys, gamma, tol=tol, check_stability=False)
    PB, rep_pb, lam = compute_PB_feasible(sys, gamma, delta=delta, tol=lmi_tol,
                                          check_stability=False,
                                          reshape_rounds=reshape_rounds)
    if refine_steps:
        refined = refine_PB_trace(sys, gamma, PB, steps=refine_steps, tol=lmi_tol)
        lam_ref = pb_lmi_max_eig(sys, gamma, refined)
        if lam_ref <= lmi_tol:
            PB, lam = refined, lam_ref
        else:  # pragma: no cover - refine guarantees feasibility
            warnings.warn("trace refinement produced an infeasible candidate; "
                          "keeping the seed")
    return GramianSet(P0=P0, Q=Q, PB=PB, gamma=gamma,
                      reports={"P0": rep_p0, "Q": rep_q, "PB": rep_pb},
                      lmi_max_eig=lam)
