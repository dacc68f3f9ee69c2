"""State-space types for bilinear control systems and their subsystem split.

A bilinear system

    x'(t) = A x(t) + B u(t) + sum_k N_k x(t) u_k(t),    x(0) = X0 v0,
    y(t)  = C x(t),

is decomposed into a homogeneous part driven purely by the initial state
(no ``B u`` term, but still control dependent through the bilinear term)
and an inhomogeneous part with zero initial state.  The output of the full
system is the sum of the two subsystem outputs.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HURWITZ_TOL = -1e-12  # max real eigenvalue part must lie below this


def _as_matrix(name, value, dtype=float):
    arr = np.array(value, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _as_vector(name, value):
    arr = np.atleast_1d(np.array(value, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def hurwitz_margin(A):
    """Largest real part over the spectrum of ``A``."""
    return float(np.max(np.real(np.linalg.eigvals(A))))


def _check_hurwitz(A):
    margin = hurwitz_margin(A)
    if margin >= HURWITZ_TOL:
        raise ValueError(
            f"A is not Hurwitz: max Re(eig) = {margin:.3e} >= {HURWITZ_TOL:.0e}"
        )


def _check_bilinear_terms(N, n, m):
    if len(N) != m:
        raise ValueError(f"expected {m} bilinear matrices (one per input), got {len(N)}")
    for k, Nk in enumerate(N):
        if Nk.shape != (n, n):
            raise ValueError(f"N[{k}] has shape {Nk.shape}, expected {(n, n)}")


@dataclass(frozen=True)
class BilinearSystem:
    """Full bilinear model ``(A, B, C, N_k, X0, v0)``.

    ``A`` must be Hurwitz; this is checked on construction.  ``X0`` holds a
    basis of admissible initial states and ``v0`` the coordinates of the
    scenario's initial state, so ``x(0) = X0 @ v0``.  Individual ``N_k`` may
    be exactly zero; those input channels do not enter the bilinear part.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    N: tuple
    X0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = _as_matrix("B", self.B)
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        C = _as_matrix("C", self.C)
        if C.shape[1] != n:
            raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
        N = tuple(_as_matrix(f"N[{k}]", Nk) for k, Nk in enumerate(self.N))
        _check_bilinear_terms(N, n, B.shape[1])
        X0 = _as_matrix("X0", self.X0)
        if X0.shape[0] != n:
            raise ValueError(f"X0 has {X0.shape[0]} rows, expected {n}")
        v0 = _as_vector("v0", self.v0)
        if v0.shape[0] != X0.shape[1]:
            raise ValueError(
                f"v0 has length {v0.shape[0]}, expected {X0.shape[1]} (columns of X0)"
            )
        _check_hurwitz(A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "v0", v0)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def q(self):
        return self.X0.shape[1]

    def to_dict(self):
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "N": [Nk.tolist() for Nk in self.N],
            "X0": self.X0.tolist(),
            "v0": self.v0.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            A=data["A"],
            B=data["B"],
            C=data["C"],
            N=tuple(np.array(Nk, dtype=float) for Nk in data["N"]),
            X0=data["X0"],
            v0=data["v0"],
        )

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def content_hash(self):
        """Stable hash of the matrix data, used for Gramian caching."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class HomogeneousSubsystem:
    """Subsystem driven only by the initial state (``B`` absent)."""

    A: np.ndarray
    N: tuple
    X0: np.ndarray
    v0: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        N = tuple(_as_matrix(f"N[{k}]", Nk) for k, Nk in enumerate(self.N))
        for k, Nk in enumerate(N):
            if Nk.shape != (n, n):
                raise ValueError(f"N[{k}] has shape {Nk.shape}, expected {(n, n)}")
        X0 = _as_matrix("X0", self.X0)
        C = _as_matrix("C", self.C)
        v0 = _as_vector("v0", self.v0)
        if X0.shape[0] != n or C.shape[1] != n or v0.shape[0] != X0.shape[1]:
            raise ValueError("inconsistent dimensions in homogeneous subsystem")
        _check_hurwitz(A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return len(self.N)

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def q(self):
        return self.X0.shape[1]


@dataclass(frozen=True)
class InhomogeneousSubsystem:
    """Subsystem with zero initial state, driven through ``B u``."""

    A: np.ndarray
    B: np.ndarray
    N: tuple
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        B = _as_matrix("B", self.B)
        C = _as_matrix("C", self.C)
        N = tuple(_as_matrix(f"N[{k}]", Nk) for k, Nk in enumerate(self.N))
        _check_bilinear_terms(N, n, B.shape[1])
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError("inconsistent dimensions in inhomogeneous subsystem")
        _check_hurwitz(A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "C", C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class ReducedHomogeneousModel:
    """Reduced model of the homogeneous subsystem (no input matrix)."""

    A: np.ndarray
    N: tuple
    X0: np.ndarray
    C: np.ndarray
    method: str  # "bt" | "spa"

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        r = A.shape[0]
        N = tuple(_as_matrix(f"N[{k}]", Nk) for k, Nk in enumerate(self.N))
        X0 = _as_matrix("X0", self.X0)
        C = _as_matrix("C", self.C)
        if any(Nk.shape != (r, r) for Nk in N) or X0.shape[0] != r or C.shape[1] != r:
            raise ValueError("inconsistent dimensions in reduced homogeneous model")
        if self.method not in ("bt", "spa"):
            raise ValueError(f"unknown reduction method {self.method!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "C", C)

    @property
    def r(self):
        return self.A.shape[0]

    def to_dict(self):
        return {
            "method": self.method,
            "pair": "x0",
            "A": self.A.tolist(),
            "N": [Nk.tolist() for Nk in self.N],
            "X0": self.X0.tolist(),
            "C": self.C.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            A=data["A"],
            N=tuple(np.array(Nk, dtype=float) for Nk in data["N"]),
            X0=data["X0"],
            C=data["C"],
            method=data["method"],
        )


@dataclass(frozen=True)
class ReducedInhomogeneousModel:
    """Reduced model of the inhomogeneous subsystem.

    Truncation keeps the original structure (``D`` and all ``E_k`` zero);
    the steady-state elimination variant acquires a feed-through ``D u`` and
    quadratic control terms ``E_k u u_k`` in the state equation.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: tuple
    N: tuple
    method: str  # "bt" | "spa"

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        r = A.shape[0]
        B = _as_matrix("B", self.B)
        m = B.shape[1]
        C = _as_matrix("C", self.C)
        D = _as_matrix("D", self.D)
        E = tuple(_as_matrix(f"E[{k}]", Ek) for k, Ek in enumerate(self.E))
        N = tuple(_as_matrix(f"N[{k}]", Nk) for k, Nk in enumerate(self.N))
        if B.shape[0] != r or C.shape[1] != r or D.shape != (C.shape[0], m):
            raise ValueError("inconsistent dimensions in reduced inhomogeneous model")
        if len(E) != m or any(Ek.shape != (r, m) for Ek in E):
            raise ValueError("E must hold one r x m matrix per input channel")
        if len(N) != m or any(Nk.shape != (r, r) for Nk in N):
            raise ValueError("N must hold one r x r matrix per input channel")
        if self.method not in ("bt", "spa"):
            raise ValueError(f"unknown reduction method {self.method!r}")
        if self.method == "bt":
            if np.any(D != 0.0) or any(np.any(Ek != 0.0) for Ek in E):
                raise ValueError("truncation must have exactly zero D and E terms")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "N", N)

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def to_dict(self):
        return {
            "method": self.method,
            "pair": "B",
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "E": [Ek.tolist() for Ek in self.E],
            "N": [Nk.tolist() for Nk in self.N],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            A=data["A"],
            B=data["B"],
            C=data["C"],
            D=data["D"],
            E=tuple(np.array(Ek, dtype=float) for Ek in data["E"]),
            N=tuple(np.array(Nk, dtype=float) for Nk in data["N"]),
            method=data["method"],
        )


def bilinear_mask(sys, tol=0.0):
    """Boolean vector marking input channels whose bilinear matrix is nonzero.

    Entry ``k`` is True iff ``||N_k||_F > tol``.  Channels with a zero
    bilinear matrix do not contribute to the exponential weight of the
    error bounds.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return np.array([np.linalg.norm(Nk, "fro") > tol for Nk in sys.N], dtype=bool)


def split_system(sys):
    """Split a full system into (homogeneous, inhomogeneous) subsystems.

    The homogeneous part keeps the initial condition and drops ``B``; the
    inhomogeneous part keeps ``B`` and starts at zero.  Matrices are shared
    by value, so reassembling them reproduces the original data bit-exactly,
    and the two simulated outputs sum to the full output (superposition).
    """
    if not isinstance(sys, BilinearSystem):
        raise ValueError("split_system expects a full BilinearSystem")
    hom = HomogeneousSubsystem(A=sys.A, N=sys.N, X0=sys.X0, v0=sys.v0, C=sys.C)
    inhom = InhomogeneousSubsystem(A=sys.A, B=sys.B, N=sys.N, C=sys.C)
    return hom, inhom


_SIGNAL_KINDS = ("expcos", "constant", "zero", "table")


@dataclass(frozen=True)
class InputSignal:
    """Closed-form input signal ``t -> u(t)`` on a horizon ``[0, T]``.

    ``mask`` has one flag per channel and is True where the channel enters
    the bilinear part of the driving system (``N_k != 0``).  Only masked
    channels count toward the exponential factor of the error bounds.
    """

    kind: str
    T: float
    mask: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _SIGNAL_KINDS:
            raise ValueError(f"unknown input kind {self.kind!r}; expected {_SIGNAL_KINDS}")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        mask = np.atleast_1d(np.array(self.mask, dtype=bool))
        object.__setattr__(self, "mask", mask)
        if self.kind == "table":
            times = _as_vector("times", self.params["times"])
            values = np.atleast_2d(np.array(self.params["values"], dtype=float))
            if values.shape != (times.shape[0], self.m):
                raise ValueError(
                    f"table values must be shaped (len(times), m)={(times.shape[0], self.m)}"
                )
            if np.any(np.diff(times) <= 0):
                raise ValueError("table times must be strictly increasing")
        probe = self(np.linspace(0.0, self.T, 7))
        if not np.all(np.isfinite(probe)):
            raise ValueError("input signal is not finite on [0, T]")

    @property
    def m(self):
        return self.mask.shape[0]

    def __call__(self, t):
        """Evaluate the signal; scalar -> (m,), array (K,) -> (K, m)."""
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        ts = np.atleast_1d(t_arr)
        if self.kind == "zero":
            out = np.zeros((ts.shape[0], self.m))
        elif self.kind == "constant":
            value = np.broadcast_to(
                np.atleast_1d(np.array(self.params.get("value", 1.0), dtype=float)),
                (self.m,),
            )
            out = np.tile(value, (ts.shape[0], 1))
        elif self.kind == "expcos":
            amp = np.broadcast_to(
                np.atleast_1d(np.array(self.params.get("amplitude", 1.0), dtype=float)),
                (self.m,),
            )
            decay = float(self.params.get("decay", 1.0))
            freq = float(self.params.get("frequency", 0.5))
            base = np.exp(-decay * ts) * np.cos(freq * ts)
            out = base[:, None] * amp[None, :]
        else:  # table
            times = np.asarray(self.params["times"], dtype=float)
            values = np.asarray(self.params["values"], dtype=float)
            out = np.column_stack(
                [np.interp(ts, times, values[:, k]) for k in range(self.m)]
            )
        return out[0] if scalar else out

    def masked(self, t):
        """Evaluate with channels zeroed wherever the bilinear matrix vanishes."""
        return self(t) * self.mask

    @classmethod
    def expcos(cls, mask, T=1.0, amplitude=1.0, decay=1.0, frequency=0.5):
        return cls(
            kind="expcos",
            T=T,
            mask=mask,
            params={"amplitude": amplitude, "decay": decay, "frequency": frequency},
        )

    @classmethod
    def zero(cls, m, T=1.0):
        return cls(kind="zero", T=T, mask=np.zeros(m, dtype=bool))

    @classmethod
    def constant(cls, value, T=1.0, mask=None):
        value = np.atleast_1d(np.array(value, dtype=float))
        if mask is None:
            mask = np.ones(value.shape[0], dtype=bool)
        return cls(kind="constant", T=T, mask=mask, params={"value": value})

    @classmethod
    def for_system(cls, sys, kind="expcos", T=1.0, **params):
        """Build a signal whose bilinear mask matches the given system."""
        mask = bilinear_mask(sys)
        if kind == "zero":
            return cls(kind="zero", T=T, mask=mask)
        return cls(kind=kind, T=T, mask=mask, params=params)
