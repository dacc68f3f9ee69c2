import json

import numpy as np
import pytest

from bilred import (
    BilinearSystem,
    InputSignal,
    bilinear_mask,
    l2_error,
    simulate_full,
    split_system,
)
from conftest import make_random


def _simple_system(n=3):
    A = -np.eye(n) - 0.1 * np.diag(np.arange(n))
    B = np.ones((n, 1))
    C = np.ones((1, n))
    N = (0.1 * np.eye(n),)
    X0 = np.ones((n, 1))
    return BilinearSystem(A=A, B=B, C=C, N=N, X0=X0, v0=[1.0])


def test_dimensions_and_properties():
    sys = _simple_system(4)
    assert (sys.n, sys.m, sys.p, sys.q) == (4, 1, 1, 1)


def test_non_hurwitz_rejected():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])  # marginally stable spiral
    with pytest.raises(ValueError, match="Hurwitz"):
        BilinearSystem(A=A, B=np.ones((2, 1)), C=np.ones((1, 2)),
                       N=(np.zeros((2, 2)),), X0=np.eye(2)[:, :1], v0=[1.0])


def test_dimension_mismatch_rejected():
    sys = _simple_system(3)
    with pytest.raises(ValueError):
        BilinearSystem(A=sys.A, B=sys.B, C=sys.C, N=(np.zeros((2, 2)),),
                       X0=sys.X0, v0=sys.v0)
    with pytest.raises(ValueError):
        BilinearSystem(A=sys.A, B=sys.B, C=sys.C, N=sys.N,
                       X0=sys.X0, v0=[1.0, 2.0])


def test_bilinear_mask_cases(heat10):
    n = 3
    sys = _simple_system(n)
    zero_sys = BilinearSystem(A=sys.A, B=sys.B, C=sys.C,
                              N=(np.zeros((n, n)),), X0=sys.X0, v0=sys.v0)
    assert bilinear_mask(zero_sys).tolist() == [False]
    assert bilinear_mask(heat10).tolist() == [True]
    two = BilinearSystem(A=sys.A, B=np.ones((n, 2)), C=sys.C,
                         N=(np.zeros((n, n)), 0.2 * np.eye(n)),
                         X0=sys.X0, v0=sys.v0)
    assert bilinear_mask(two).tolist() == [False, True]
    with pytest.raises(ValueError):
        bilinear_mask(sys, tol=-1.0)


def test_split_is_lossless(heat10):
    hom, inhom = split_system(heat10)
    # reassembling the subsystem matrices reproduces the original bit-exactly
    assert np.array_equal(hom.A, heat10.A) and np.array_equal(inhom.A, heat10.A)
    assert np.array_equal(inhom.B, heat10.B)
    assert np.array_equal(hom.X0, heat10.X0)
    assert np.array_equal(hom.v0, heat10.v0)
    assert np.array_equal(inhom.C, heat10.C)
    assert all(np.array_equal(a, b) for a, b in zip(hom.N, heat10.N))


def test_split_superposition_random():
    sys = make_random(21)
    u = InputSignal.for_system(sys, "expcos", T=1.0)
    hom, inhom = split_system(sys)
    dt = 1e-3
    y_full = simulate_full(sys, u, T=1.0, dt=dt)
    y_hom = simulate_full(hom, u, T=1.0, dt=dt)
    y_inh = simulate_full(inhom, u, T=1.0, dt=dt)
    dev = np.max(np.abs(y_full.y - (y_hom.y + y_inh.y)))
    assert dev < 1e-10  # well below the integrator error at this step size


def test_split_zero_initial_state():
    sys = make_random(22)
    zeroed = BilinearSystem(A=sys.A, B=sys.B, C=sys.C, N=sys.N,
                            X0=np.zeros_like(sys.X0), v0=sys.v0)
    hom, _ = split_system(zeroed)
    u = InputSignal.for_system(zeroed, "expcos", T=0.5)
    traj = simulate_full(hom, u, T=0.5, dt=1e-3)
    assert np.all(traj.y == 0.0)


def test_heat_split_shares_data(heat10):
    hom, inhom = split_system(heat10)
    assert np.all(hom.X0 == 1.0)
    assert np.array_equal(inhom.A, heat10.A)
    assert np.array_equal(inhom.N[0], heat10.N[0])


def test_json_round_trip(tmp_path):
    sys = make_random(23, n=5, m=2, p=2, q=2)
    path = tmp_path / "sys.json"
    sys.save_json(path)
    loaded = BilinearSystem.load_json(path)
    assert np.array_equal(loaded.A, sys.A)
    assert np.array_equal(loaded.B, sys.B)
    assert all(np.array_equal(a, b) for a, b in zip(loaded.N, sys.N))
    assert np.array_equal(loaded.v0, sys.v0)
    # schema check: plain row-major nested lists
    raw = json.loads(path.read_text())
    assert set(raw) == {"A", "B", "C", "N", "X0", "v0"}
    assert len(raw["A"]) == sys.n and len(raw["A"][0]) == sys.n


def test_input_signal_kinds():
    mask = np.array([True])
    u = InputSignal.expcos(mask, T=1.0)
    assert u(0.0) == pytest.approx([1.0])
    t = 0.3
    assert u(t)[0] == pytest.approx(np.exp(-t) * np.cos(0.5 * t))
    z = InputSignal.zero(2, T=1.0)
    assert np.all(z(np.linspace(0, 1, 5)) == 0.0)
    c = InputSignal.constant([2.0, -1.0], T=2.0)
    assert np.allclose(c(1.7), [2.0, -1.0])
    table = InputSignal(kind="table", T=1.0, mask=np.array([True]),
                        params={"times": [0.0, 1.0], "values": [[0.0], [2.0]]})
    assert table(0.5)[0] == pytest.approx(1.0)


def test_input_signal_mask_semantics():
    mask = np.array([False, True])
    u = InputSignal.constant([3.0, 4.0], T=1.0, mask=mask)
    masked = u.masked(0.2)
    assert masked.tolist() == [0.0, 4.0]


def test_input_signal_validation():
    with pytest.raises(ValueError):
        InputSignal.expcos(np.array([True]), T=-1.0)
    with pytest.raises(ValueError):
        InputSignal(kind="nope", T=1.0, mask=np.array([True]))
