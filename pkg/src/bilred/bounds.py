"""L2 output error bounds for the reduced subsystem models.

For the homogeneous subsystem the bound is

    ||y - y_r||_{L2} <= sqrt(tr(Theta2 W)) * exp(0.5 ||gamma u0||_{L2}^2) * ||v0||_2,

where ``Theta2`` holds the truncated Hankel singular values, ``u0`` is the
input restricted to the channels that enter the bilinear part, and the
weight ``W`` couples the truncated blocks of the balanced realization with
the solution ``Y`` of a full-by-reduced coupled equation.  The same scalar
admits an a-posteriori form

    E = tr(C P0 C^T) + tr(C_r P_r C_r^T) - 2 tr(C P_hat C_r^T)

built from the original-coordinate Gramian ``P0``, the reduced Gramian
``P_r`` and a mixed Gramian ``P_hat``; the two forms agree algebraically.

For the inhomogeneous subsystem the bound is
``2 * sum of truncated HSVs * exp factor * ||u||_{L2}``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.integrate import simpson

from .errors import SolveError
from .matrixeq import GenSylvesterProblem, solve_generalized_sylvester
from .reduction import reduced_state_gramian

_TRACE_CLAMP_RTOL = 1e-10


@dataclass
class ErrorBoundReport:
    """A bound value with its factors and the intermediate matrices."""

    bound_value: float
    method: str
    pair: str
    gamma: float
    components: dict
    intermediates: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.bound_value < 0:
            raise ValueError("bound_value must be non-negative")
        exp_factor = self.components.get("exp_factor", 1.0)
        if exp_factor < 1.0:
            raise ValueError("exponential factor must be >= 1")

    def to_dict(self, include_matrices=False):
        out = {
            "bound_value": self.bound_value,
            "method": self.method,
            "pair": self.pair,
            "gamma": self.gamma,
            "components": dict(self.components),
        }
        if include_matrices:
            out["intermediates"] = {
                k: np.asarray(v).tolist() for k, v in self.intermediates.items()
            }
        return out


def _quad_grid(T, dt):
    steps = int(round(T / dt))
    if steps < 2 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt (>= 2 steps)")
    return np.linspace(0.0, T, steps + 1)


def u0_l2norm_sq(u, gamma, T=None, dt=1e-4):
    """Squared L2 norm of the rescaled masked input, ``int ||gamma u0||^2``."""
    if T is None:
        T = u.T
    if not T > 0:
        raise ValueError("T must be positive")
    ts = _quad_grid(T, dt)
    vals = u(ts) * u.mask  # channels without a bilinear term drop out
    integrand = gamma**2 * np.sum(vals * vals, axis=1)
    return float(simpson(integrand, dx=dt))


def u_l2norm(u, T=None, dt=1e-4):
    """L2 norm of the full (unmasked) input signal on ``[0, T]``."""
    if T is None:
        T = u.T
    ts = _quad_grid(T, dt)
    vals = u(ts)
    return float(np.sqrt(max(simpson(np.sum(vals * vals, axis=1), dx=dt), 0.0)))


def exp_factor(u, gamma, T=None, dt=1e-4):
    """The control-energy amplification ``exp(0.5 ||gamma u0||^2)``."""
    return float(np.exp(0.5 * u0_l2norm_sq(u, gamma, T=T, dt=dt)))


def _clamped_trace(trace, theta_scale, w_scale, context):
    if trace < -_TRACE_CLAMP_RTOL * max(theta_scale * w_scale, 1e-300):
        raise SolveError(
            f"{context}: trace negative beyond tolerance ({trace:.3e})"
        )
    if trace < 0.0:
        warnings.warn(f"{context}: clamping tiny negative trace {trace:.3e} to 0")
        return 0.0
    return trace


def solve_coupling_gramian(A, N, rom, gamma, RHS, tol=1e-10):
    """Solve ``A Y + Y A_r^T + (1/gamma^2) sum N_k Y N_{r,k}^T = -RHS``."""
    prob = GenSylvesterProblem(A=A, A_r=rom.A, N=N, N_r=rom.N, gamma=gamma,
                               RHS=RHS)
    return solve_generalized_sylvester(prob, tol=tol)


def bound_x0_apriori(part, rom, gamma, u, v0, T=None, dt=1e-4, p_red=None,
                     tol=1e-10):
    """A-priori bound for the homogeneous subsystem in balanced coordinates.

    ``part`` must be the balanced partition the reduced model was built
    from.  ``p_red`` may carry a precomputed reduced Gramian; otherwise it
    is solved here (for the steady-state variant its existence is a runtime
    question and failures are reported as errors).
    """
    if part.pair != "x0":
        raise ValueError("expected a partition of the (P0, Q) pair")
    r, n = part.r, part.n
    if rom.r != r:
        raise ValueError("partition and reduced model disagree on the order")
    theta1 = part.hsv1
    if theta1.size and theta1.min() <= 0:
        raise ValueError("kept Hankel singular values must be positive")
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    v0_norm = float(np.linalg.norm(v0))
    efac = exp_factor(u, gamma, T=T, dt=dt)

    if p_red is None:
        try:
            p_red = reduced_state_gramian(rom, gamma, tol=tol).X
        except Exception as exc:
            if rom.method == "spa":
                raise SolveError(f"SPA reduced Gramian unavailable: {exc}")
            raise

    if r == n:
        bound = 0.0
        return ErrorBoundReport(
            bound_value=bound, method=rom.method, pair="x0", gamma=gamma,
            components={"trace_term": 0.0, "exp_factor": efac,
                        "v0_norm": v0_norm},
            intermediates={"Theta2": part.hsv2, "P_red": p_red},
        )

    RHS = part.X0 @ part.X01.T
    Y = solve_coupling_gramian(part.A, part.N, rom, gamma, RHS, tol=tol).X
    Y2 = Y[r:]
    c = 1.0 / gamma**2

    if rom.method == "bt":
        A_bold21 = part.A21
        A_bar21 = None  # zero block: its term vanishes
        N_bold21 = part.N21
    else:
        A22inv_A21 = spla.solve(part.A22, part.A21)
        A_bold21 = None
        A_bar21 = -A22inv_A21
        N_bold21 = tuple(N21 - N22 @ A22inv_A21
                         for N21, N22 in zip(part.N21, part.N22))

    W = part.X02 @ part.X02.T
    if A_bold21 is not None:
        W = W + 2.0 * (Y2 @ A_bold21.T)
    if A_bar21 is not None:
        W = W + 2.0 * ((part.A[r:, :] @ Y) @ A_bar21.T)
    for k, Nb21 in enumerate(N_bold21):
        W = W + c * (2.0 * ((part.N[k][r:, :] @ Y) @ Nb21.T)
                     - Nb21 @ p_red @ Nb21.T)

    theta2 = part.hsv2
    trace = float(np.sum(theta2 * np.diag(W)))
    theta_scale = float(theta2[0]) if theta2.size else 0.0
    trace = _clamped_trace(trace, theta_scale, float(np.linalg.norm(W, "fro")),
                           "a-priori weight")
    bound = float(np.sqrt(trace) * efac * v0_norm)
    return ErrorBoundReport(
        bound_value=bound, method=rom.method, pair="x0", gamma=gamma,
        components={"trace_term": trace, "exp_factor": efac,
                    "v0_norm": v0_norm},
        intermediates={"Y": Y, "W": W, "Theta2": theta2, "P_red": p_red},
    )


def bound_x0_posteriori(sub, rom, P0, gamma, u, v0, T=None, dt=1e-4,
                        p_red=None, tol=1e-10):
    """A-posteriori bound built from original-coordinate Gramians.

    Avoids the full balanced realization: only ``P0`` (available anyway),
    the reduced Gramian and the mixed coupling Gramian ``P_hat`` enter.
    The reported squared distance ``E`` equals the a-priori trace term.
    """
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    v0_norm = float(np.linalg.norm(v0))
    efac = exp_factor(u, gamma, T=T, dt=dt)
    if p_red is None:
        try:
            p_red = reduced_state_gramian(rom, gamma, tol=tol).X
        except Exception as exc:
            if rom.method == "spa":
                raise SolveError(f"SPA reduced Gramian unavailable: {exc}")
            raise
    RHS = sub.X0 @ rom.X0.T
    P_hat = solve_coupling_gramian(sub.A, sub.N, rom, gamma, RHS, tol=tol).X
    C, C_r = sub.C, rom.C
    e_full = float(np.trace(C @ P0 @ C.T))
    e_red = float(np.trace(C_r @ p_red @ C_r.T))
    e_mixed = float(np.trace(C @ P_hat @ C_r.T))
    energy = e_full + e_red - 2.0 * e_mixed
    energy = _clamped_trace(energy, 1.0, abs(e_full) + abs(e_red) + abs(e_mixed),
                            "a-posteriori distance")
    bound = float(np.sqrt(energy) * efac * v0_norm)
    return ErrorBoundReport(
        bound_value=bound, method=rom.method, pair="x0", gamma=gamma,
        components={"E": energy, "exp_factor": efac, "v0_norm": v0_norm,
                    "tr_full": e_full, "tr_red": e_red, "tr_mixed": e_mixed},
        intermediates={"P_hat": P_hat, "P_red": p_red},
    )


def bound_B(hsv, r, gamma, u, method="bt", T=None, dt=1e-4):
    """A-priori bound for the inhomogeneous subsystem.

    Twice the truncated HSV tail, amplified by the exponential control
    factor and the L2 norm of the full input.  Identical for both
    reduction variants.
    """
    hsv = np.asarray(hsv, dtype=float)
    if not 0 <= r <= hsv.shape[0]:
        raise ValueError("reduced order out of range")
    tail = float(np.sum(hsv[r:]))
    efac = exp_factor(u, gamma, T=T, dt=dt)
    u_norm = u_l2norm(u, T=T, dt=dt)
    bound = 2.0 * tail * efac * u_norm
    return ErrorBoundReport(
        bound_value=bound, method=method, pair="B", gamma=gamma,
        components={"hsv_tail_sum": tail, "exp_factor": efac,
                    "u_norm": u_norm},
        intermediates={"Sigma2": hsv[r:]},
    )


def bound_total(report_x0, report_B):
    """Combined bound for the full system (shared exponential factor).

    Equals the sum of the subsystem bounds because both carry the same
    ``exp(0.5 ||gamma u0||^2)`` factor.
    """
    if report_x0.pair != "x0" or report_B.pair != "B":
        raise ValueError("expected one x0-pair and one B-pair report")
    if report_x0.gamma != report_B.gamma:
        raise ValueError(
            f"gamma mismatch: {report_x0.gamma} vs {report_B.gamma}"
        )
    e1 = report_x0.components["exp_factor"]
    e2 = report_B.components["exp_factor"]
    if abs(e1 - e2) > 1e-9 * max(e1, e2):
        raise ValueError("subsystem bounds were computed with different inputs")
    total = report_x0.bound_value + report_B.bound_value
    return ErrorBoundReport(
        bound_value=total,
        method=f"{report_x0.method}+{report_B.method}",
        pair="total", gamma=report_x0.gamma,
        components={"x0_bound": report_x0.bound_value,
                    "B_bound": report_B.bound_value,
                    "exp_factor": e1},
    )
