"""Fixed-step RK4 simulation of bilinear systems and error measurement.

The integrator is deliberately plain: classical RK4 with a fixed step and
the input sampled analytically at the stage times.  Determinism matters
more than speed here because simulated outputs back every error-bound
verification.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import SimulationError


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid output samples, optionally with the state history."""

    t: np.ndarray
    y: np.ndarray  # shape (len(t), p)
    x: np.ndarray = None

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if t.ndim != 1 or y.ndim != 2 or y.shape[0] != t.shape[0]:
            raise ValueError("trajectory arrays are inconsistent")
        steps = np.diff(t)
        if steps.size and (np.max(steps) - np.min(steps)) > 1e-9 * max(np.max(steps), 1e-300):
            raise ValueError("time grid must be uniform")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)


def _grid_steps(T, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < dt:
        raise ValueError("need T >= dt")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    return steps


def _rk4(f, x0, T, dt, output, store_states):
    steps = _grid_steps(T, dt)
    x = np.array(x0, dtype=float)
    ts = dt * np.arange(steps + 1)
    ys = [output(0.0, x)]
    xs = [x.copy()] if store_states else None
    for k in range(steps):
        t = k * dt
        k1 = f(t, x)
        k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"integration diverged at t = {t + dt:.6g}")
        ys.append(output(t + dt, x))
        if store_states:
            xs.append(x.copy())
    return Trajectory(t=ts, y=np.array(ys),
                      x=np.array(xs) if store_states else None)


def simulate_full(sys, u, v0=None, T=1.0, dt=1e-4, store_states=False):
    """Simulate ``x' = A x + B u + sum_k N_k x u_k`` with ``y = C x``.

    Also accepts the split subsystems: a homogeneous subsystem simply has
    no ``B`` term, an inhomogeneous one starts at zero.  ``v0`` overrides
    the initial-state coordinates stored with the system.
    """
    A, C, N = sys.A, sys.C, sys.N
    B = getattr(sys, "B", None)
    X0 = getattr(sys, "X0", None)
    if X0 is not None:
        if v0 is None:
            v0 = sys.v0
        v0 = np.atleast_1d(np.asarray(v0, dtype=float))
        x0 = X0 @ v0
    else:
        x0 = np.zeros(A.shape[0])

    def f(t, x):
        uv = u(t)
        dx = A @ x
        if B is not None:
            dx = dx + B @ uv
        for k, Nk in enumerate(N):
            if uv[k] != 0.0:
                dx = dx + uv[k] * (Nk @ x)
        return dx

    return _rk4(f, x0, T, dt, lambda t, x: C @ x, store_states)


def simulate_rom_homogeneous(rom, u, v0, T=1.0, dt=1e-4, store_states=False):
    """Simulate a reduced homogeneous model from ``x(0) = X0_r v0``."""
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    A, C, N = rom.A, rom.C, rom.N
    x0 = rom.X0 @ v0

    def f(t, x):
        uv = u(t)
        dx = A @ x
        for k, Nk in enumerate(N):
            if uv[k] != 0.0:
                dx = dx + uv[k] * (Nk @ x)
        return dx

    return _rk4(f, x0, T, dt, lambda t, x: C @ x, store_states)


def simulate_rom_inhomogeneous(rom, u, T=1.0, dt=1e-4, store_states=False):
    """Simulate a reduced inhomogeneous model from zero initial state.

    Includes the quadratic control drive ``(N_k x + E_k u) u_k`` and the
    feed-through output ``y = C x + D u`` of the steady-state variant;
    for truncation those terms are exactly zero.
    """
    A, B, C, D, E, N = rom.A, rom.B, rom.C, rom.D, rom.E, rom.N
    has_e = any(np.any(Ek) for Ek in E)
    has_d = bool(np.any(D))
    x0 = np.zeros(A.shape[0])

    def f(t, x):
        uv = u(t)
        dx = A @ x + B @ uv
        for k, Nk in enumerate(N):
            if uv[k] != 0.0:
                dx = dx + uv[k] * (Nk @ x)
                if has_e:
                    dx = dx + uv[k] * (E[k] @ uv)
        return dx

    if has_d:
        def output(t, x):
            return C @ x + D @ u(t)
    else:
        def output(t, x):
            return C @ x

    return _rk4(f, x0, T, dt, output, store_states)


def _check_grids(y_ref, y_test):
    if y_ref.t.shape != y_test.t.shape or y_ref.y.shape != y_test.y.shape:
        raise ValueError("trajectories live on different grids")
    if np.max(np.abs(y_ref.t - y_test.t)) > 1e-9 * max(float(y_ref.t[-1]), 1e-300):
        raise ValueError("trajectories live on different grids")


def l2_error(y_ref, y_test):
    """L2 norm of the output difference over the common grid (Simpson)."""
    _check_grids(y_ref, y_test)
    diff = y_ref.y - y_test.y
    integrand = np.sum(diff * diff, axis=1)
    value = simpson(integrand, dx=y_ref.dt)
    return float(np.sqrt(max(value, 0.0)))


def l2_norm(traj):
    """L2 norm of an output trajectory (used for normalized errors)."""
    integrand = np.sum(traj.y * traj.y, axis=1)
    return float(np.sqrt(max(simpson(integrand, dx=traj.dt), 0.0)))


def pointwise_abs_error(y_ref, y_test):
    """Elementwise absolute output deviation per grid point."""
    _check_grids(y_ref, y_test)
    return np.abs(y_ref.y - y_test.y)


def write_trajectory_csv(path, traj, label="y"):
    """Export a trajectory as CSV with columns ``t, y1, ..., yp``."""
    p = traj.y.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"{label}{i + 1}" for i in range(p)])
        for t, row in zip(traj.t, traj.y):
            writer.writerow([f"{t:.12e}"] + [f"{v:.12e}" for v in row])


def write_error_csv(path, t, eps):
    """Export a pointwise error curve as CSV with columns ``t, eps...``."""
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    if eps.shape[0] != t.shape[0]:
        eps = eps.T
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"eps{i + 1}" for i in range(eps.shape[1])])
        for ti, row in zip(t, eps):
            writer.writerow([f"{ti:.12e}"] + [f"{v:.12e}" for v in row])
