"""The four reduced-order model constructions.

Truncation (BT) keeps the leading blocks of the balanced realization.
Singular perturbation approximation (SPA) instead freezes the weak states
at their quasi steady state and eliminates them algebraically, which
preserves the steady-state map and, for the inhomogeneous subsystem,
introduces feed-through and quadratic control corrections.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as spla

from .errors import SolveError
from .matrixeq import (
    GenLyapProblem,
    check_generalized_stability,
    solve_generalized_lyapunov,
)
from .model import ReducedHomogeneousModel, ReducedInhomogeneousModel

_COND_WARN = 1e12


def _solve_a22(part, rhs):
    A22 = part.A22
    cond = np.linalg.cond(A22)
    if not np.isfinite(cond) or cond > _COND_WARN:
        warnings.warn(f"A22 is ill conditioned (cond ~ {cond:.2e})")
    try:
        return spla.solve(A22, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveError(f"A22 singular: {exc}")


def reduce_x0_bt(part):
    """Balanced truncation of the homogeneous subsystem."""
    if part.pair != "x0":
        raise ValueError("expected a partition of the (P0, Q) pair")
    return ReducedHomogeneousModel(A=part.A11, N=part.N11, X0=part.X01,
                                   C=part.C1, method="bt")


def reduce_x0_spa(part):
    """Steady-state elimination of the weak states (homogeneous subsystem).

    Shares the reduced initial-condition matrix with truncation.
    """
    if part.pair != "x0":
        raise ValueError("expected a partition of the (P0, Q) pair")
    if part.r == part.n:
        return ReducedHomogeneousModel(A=part.A11, N=part.N11, X0=part.X01,
                                       C=part.C1, method="spa")
    A22inv_A21 = _solve_a22(part, part.A21)
    A_red = part.A11 - part.A12 @ A22inv_A21
    C_red = part.C1 - part.C2 @ A22inv_A21
    N_red = tuple(N11 - N12 @ A22inv_A21
                  for N11, N12 in zip(part.N11, part.N12))
    return ReducedHomogeneousModel(A=A_red, N=N_red, X0=part.X01, C=C_red,
                                   method="spa")


def reduce_B_bt(part):
    """Balanced truncation of the inhomogeneous subsystem (structure kept)."""
    if part.pair != "B":
        raise ValueError("expected a partition of the (PB, Q) pair")
    p, m = part.C.shape[0], part.B.shape[1]
    r = part.r
    return ReducedInhomogeneousModel(
        A=part.A11, B=part.B1, C=part.C1,
        D=np.zeros((p, m)), E=tuple(np.zeros((r, m)) for _ in part.N),
        N=part.N11, method="bt",
    )


def reduce_B_spa(part):
    """Steady-state elimination for the inhomogeneous subsystem.

    Produces feed-through ``D`` and quadratic control terms ``E_k`` on top
    of the reduced bilinear dynamics.
    """
    if part.pair != "B":
        raise ValueError("expected a partition of the (PB, Q) pair")
    p, m = part.C.shape[0], part.B.shape[1]
    r = part.r
    if r == part.n:
        return ReducedInhomogeneousModel(
            A=part.A11, B=part.B1, C=part.C1,
            D=np.zeros((p, m)), E=tuple(np.zeros((r, m)) for _ in part.N),
            N=part.N11, method="spa",
        )
    sol = _solve_a22(part, np.hstack([part.A21, part.B2]))
    A22inv_A21, A22inv_B2 = sol[:, :r], sol[:, r:]
    A_red = part.A11 - part.A12 @ A22inv_A21
    B_red = part.B1 - part.A12 @ A22inv_B2
    C_red = part.C1 - part.C2 @ A22inv_A21
    D_red = -part.C2 @ A22inv_B2
    E_red = tuple(-N12 @ A22inv_B2 for N12 in part.N12)
    N_red = tuple(N11 - N12 @ A22inv_A21
                  for N11, N12 in zip(part.N11, part.N12))
    return ReducedInhomogeneousModel(A=A_red, B=B_red, C=C_red, D=D_red,
                                     E=E_red, N=N_red, method="spa")


def check_reduced_stability(rom, gamma):
    """Generalized stability certificate of a reduced model."""
    return check_generalized_stability(rom.A, rom.N, gamma)


def reduced_state_gramian(rom, gamma, tol=1e-10):
    """Reachability-type Gramian of a reduced homogeneous model.

    Needed by the error bounds.  Existence is guaranteed for truncation;
    for the steady-state variant it is a runtime question, surfaced as a
    ``StabilityError``/``SolveError`` by the solver.
    """
    prob = GenLyapProblem(A=rom.A, N=rom.N, gamma=gamma,
                          RHS=rom.X0 @ rom.X0.T, adjoint=False)
    return solve_generalized_lyapunov(prob, tol=tol)


def bt_gramian_inequality_gap(part, gamma):
    """Violation of the reduced-Gramian inequality satisfied by truncation.

    Returns the largest eigenvalue of

        A11 T1 + T1 A11^T + (1/gamma^2) sum N11 T1 N11^T + X01 X01^T,

    which is non-positive (up to solver residuals) because the discarded
    coupling term of the balanced equation is positive semidefinite.
    """
    if part.pair != "x0":
        raise ValueError("expected a partition of the (P0, Q) pair")
    T1 = np.diag(part.hsv1)
    M = part.A11 @ T1 + T1 @ part.A11.T + part.X01 @ part.X01.T
    c = 1.0 / gamma**2
    for N11 in part.N11:
        M += c * (N11 @ T1 @ N11.T)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
