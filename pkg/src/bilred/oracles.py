"""Independent numerical oracles and the fixture suite that runs them.

Every nontrivial expected value in the test suite is backed by one of the
slow-but-simple computations here: time integration of the matrix flow for
Gramians, matrix-exponential stepping for linear outputs, transpose
duality, eigenvalues of the Gramian product for HSVs, a hand-assembled
stencil for the smallest heat benchmark, and quadrature refinement for the
input norms.  The oracle suite is runnable standalone so the main solver
stack can be cross-checked before it is trusted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.linalg as spla

from .balancing import balance_pair
from .benchmarks import Heat2dConfig, heat2d
from .gramians import compute_P0, compute_Q
from .model import BilinearSystem
from .matrixeq import integrate_Z


def gramian_time_integral(A, N, gamma, K, T=100.0, dt=1e-3, adjoint=False):
    """Trapezoid accumulation of the matrix-flow integral.

    Integrates the flow ``Z' = A Z + Z A^T + (1/gamma^2) sum N_k Z N_k^T``
    (RK4, fixed step) and accumulates ``int_0^T Z dt`` on the fly, which
    converges to the algebraic Gramian as ``T`` grows.  The adjoint flag
    transposes the coefficients.
    """
    A = np.asarray(A, dtype=float)
    if adjoint:
        A = A.T
        N = tuple(Nk.T for Nk in N)
    steps = int(round(T / dt))
    c = 1.0 / gamma**2

    def rhs(Z):
        out = A @ Z + Z @ A.T
        for Nk in N:
            out += c * (Nk @ Z @ Nk.T)
        return out

    Z = 0.5 * (K + K.T)
    acc = np.zeros_like(Z)
    for _ in range(steps):
        k1 = rhs(Z)
        k2 = rhs(Z + 0.5 * dt * k1)
        k3 = rhs(Z + 0.5 * dt * k2)
        k4 = rhs(Z + dt * k3)
        Z_next = Z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Z_next = 0.5 * (Z_next + Z_next.T)
        acc += 0.5 * dt * (Z + Z_next)
        Z = Z_next
    return acc


def expm_output(A, C, x0, T, dt):
    """Linear output samples ``C exp(A t) x0`` by matrix-exponential stepping."""
    steps = int(round(T / dt))
    E = spla.expm(A * dt)
    x = np.asarray(x0, dtype=float)
    ys = [C @ x]
    for _ in range(steps):
        x = E @ x
        ys.append(C @ x)
    return np.array(ys)


def transpose_duality_gap(sys, gamma):
    """Relative gap between Q(A, N, C) and P0 of the transposed data."""
    Q, _ = compute_Q(sys, gamma, check_stability=False)
    transposed = BilinearSystem(
        A=sys.A.T, B=np.zeros_like(sys.B), C=np.zeros_like(sys.C),
        N=tuple(Nk.T for Nk in sys.N), X0=sys.C.T,
        v0=np.zeros(sys.C.shape[0]),
    )
    P0t, _ = compute_P0(transposed, gamma, check_stability=False)
    return float(np.linalg.norm(Q - P0t, "fro")
                 / max(np.linalg.norm(Q, "fro"), 1e-300))


def hsv_product_gap(P, Q):
    """Relative gap between balancing HSVs and sqrt(eig(P Q))."""
    bal = balance_pair(P, Q)
    eigs = np.sort(np.clip(np.real(np.linalg.eigvals(P @ Q)), 0.0, None))[::-1]
    ref = np.sqrt(eigs)
    return float(np.max(np.abs(bal.hsv - ref)) / max(ref[0], 1e-300))


def heat2d_k2_matrices():
    """Hand-assembled matrices for the 2x2-grid heat benchmark.

    Grid spacing 1/3, so the stencil weight is 9 and the edge feedback
    coefficient is 3.  Node order: (0,0), (1,0), (0,1), (1,1).
    """
    A = np.array([
        [-36.0, 9.0, 9.0, 0.0],
        [9.0, -36.0, 0.0, 9.0],
        [9.0, 0.0, -36.0, 9.0],
        [0.0, 9.0, 9.0, -36.0],
    ])
    B = np.array([[9.0], [0.0], [9.0], [0.0]])
    N = np.diag([0.0, 3.0, 0.0, 3.0])
    C = np.full((1, 4), 0.25)
    return {"A": A, "B": B, "N": N, "C": C}


def quadrature_refinement_value(func, T, dt_fine=1e-6):
    """High-resolution trapezoid value of a scalar integrand on [0, T]."""
    ts = np.arange(0.0, T + 0.5 * dt_fine, dt_fine)
    return float(np.trapezoid(func(ts), dx=dt_fine))


@dataclass
class OracleResult:
    fixture: str
    oracle: str
    passed: bool
    deviation: float
    tol: float
    message: str = ""


@dataclass
class OracleReport:
    results: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def to_dict(self):
        return {
            "passed": self.passed,
            "warnings": list(self.warnings),
            "results": [
                {
                    "fixture": r.fixture,
                    "oracle": r.oracle,
                    "passed": r.passed,
                    "deviation": r.deviation,
                    "tol": r.tol,
                    "message": r.message,
                }
                for r in self.results
            ],
        }


def _fixture_dir():
    return resources.files("bilred") / "fixtures"


def _run_check(sys, check, name):
    oracle = check["oracle"]
    tol = float(check["tol"])
    gamma = float(check.get("gamma", 1.0))
    if oracle == "p0_time_integral":
        P0, _ = compute_P0(sys, gamma, check_stability=False)
        ref = gramian_time_integral(sys.A, sys.N, gamma, sys.X0 @ sys.X0.T,
                                    T=float(check.get("T", 100.0)),
                                    dt=float(check.get("dt", 1e-3)))
        dev = float(np.linalg.norm(P0 - ref, "fro")
                    / max(np.linalg.norm(ref, "fro"), 1e-300))
    elif oracle == "transpose_duality":
        dev = transpose_duality_gap(sys, gamma)
    elif oracle == "hsv_product":
        P0, _ = compute_P0(sys, gamma, check_stability=False)
        Q, _ = compute_Q(sys, gamma, check_stability=False)
        dev = hsv_product_gap(P0, Q)
    elif oracle == "expm_linear_output":
        T, dt = float(check.get("T", 1.0)), float(check.get("dt", 1e-4))
        from .model import InputSignal
        from .sim import simulate_full
        lin = BilinearSystem(A=sys.A, B=sys.B, C=sys.C,
                             N=tuple(np.zeros_like(Nk) for Nk in sys.N),
                             X0=sys.X0, v0=sys.v0)
        traj = simulate_full(lin, InputSignal.zero(lin.m, T), T=T, dt=dt)
        ref = expm_output(lin.A, lin.C, lin.X0 @ lin.v0, T, dt)
        dev = float(np.max(np.abs(traj.y - ref))
                    / max(np.max(np.abs(ref)), 1e-300))
    elif oracle == "heat2d_k2_stencil":
        built = heat2d(Heat2dConfig(k=2))
        ref = heat2d_k2_matrices()
        dev = max(
            float(np.max(np.abs(built.A - ref["A"]))),
            float(np.max(np.abs(built.B - ref["B"]))),
            float(np.max(np.abs(built.N[0] - ref["N"]))),
            float(np.max(np.abs(built.C - ref["C"]))),
        )
    else:
        raise ValueError(f"unknown oracle {oracle!r} in fixture {name!r}")
    return OracleResult(fixture=name, oracle=oracle, passed=bool(dev <= tol),
                        deviation=dev, tol=tol)


def run_oracles(fixture_dir=None, report_path=None):
    """Execute every oracle declared by the shipped fixtures.

    Returns an ``OracleReport``; a corrupted fixture contributes a failed
    result naming the offending file, and an empty fixture set passes
    vacuously with a warning.
    """
    report = OracleReport()
    if fixture_dir is None:
        entries = sorted(
            (p.name, p.read_text()) for p in _fixture_dir().iterdir()
            if p.name.endswith(".json")
        )
    else:
        entries = sorted(
            (p.name, p.read_text()) for p in Path(fixture_dir).glob("*.json")
        )
    if not entries:
        report.warnings.append("no fixtures found; oracle suite passes vacuously")
        return _finish(report, report_path)
    for name, text in entries:
        try:
            data = json.loads(text)
            checks = data["checks"]
            sys = (BilinearSystem.from_dict(data["system"])
                   if "system" in data else None)
        except Exception as exc:
            report.results.append(OracleResult(
                fixture=name, oracle=str("<load>"), passed=False,
                deviation=float("inf"), tol=0.0,
                message=f"corrupted fixture: {exc}"))
            continue
        for check in checks:
            try:
                report.results.append(_run_check(sys, check, name))
            except Exception as exc:
                report.results.append(OracleResult(
                    fixture=name, oracle=str(check.get("oracle", "<unknown>")),
                    passed=False, deviation=float("inf"),
                    tol=float(check.get("tol", 0.0)),
                    message=f"oracle raised: {exc}"))
    return _finish(report, report_path)


def _finish(report, report_path):
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report
