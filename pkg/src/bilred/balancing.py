"""Square-root balancing of a Gramian pair and balanced-realization assembly.

Given factorizations ``P = K K^T`` and ``Q = L L^T`` and the singular value
decomposition ``K^T L = V Theta U^T``, the transformation

    S = Theta^{-1/2} U^T L^T,      S^{-1} = K V Theta^{-1/2}

makes both Gramians equal to ``diag(theta_1, ..., theta_n)``.  The diagonal
entries are the Hankel singular values of the pair: the square roots of the
eigenvalues of ``P Q``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BalancingError, HsvTieWarning
from .model import HomogeneousSubsystem, InhomogeneousSubsystem

HSV_TIE_RTOL = 1e-10


def psd_factor(M, rank_tol=1e-12, floor=None):
    """Factor ``M ~ K K^T`` through a symmetric eigendecomposition.

    Columns are kept for eigenvalues above ``rank_tol * lambda_max``, so the
    factor is rank revealing.  With ``floor`` set, eigenvalues are instead
    clamped from below at ``floor * lambda_max`` and all ``n`` columns are
    kept; this regularized mode supports full-order balancing of numerically
    singular Gramian pairs.  Raises ``BalancingError`` when ``M`` has a
    significantly negative eigenvalue.
    """
    M = np.asarray(M, dtype=float)
    sym = 0.5 * (M + M.T)
    w, U = np.linalg.eigh(sym)
    wmax = max(float(w[-1]), 0.0)
    if w[0] < -1e-10 * max(wmax, 1e-300):
        raise BalancingError(
            f"matrix is not positive semidefinite (min eig {w[0]:.3e})"
        )
    w = np.clip(w, 0.0, None)
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    if floor is not None:
        if wmax == 0.0:
            raise BalancingError("cannot floor the spectrum of a zero matrix")
        w = np.maximum(w, floor * wmax)
        keep = np.ones(w.shape[0], dtype=bool)
    else:
        keep = w > rank_tol * wmax
    return U[:, keep] * np.sqrt(w[keep])


@dataclass(frozen=True)
class BalancingResult:
    """Balancing transformation pair with the Hankel singular values.

    ``pair`` records which Gramian pair was balanced: ``"x0"`` for the
    homogeneous subsystem (``P0`` with ``Q``) and ``"B"`` for the
    inhomogeneous one (``PB`` with ``Q``).
    """

    S: np.ndarray
    Sinv: np.ndarray
    hsv: np.ndarray
    pair: str

    @property
    def n(self):
        return self.S.shape[0]


def balance_pair(P, Q, rank_tol=1e-12, floor=None, pair="x0"):
    """Construct the contragredient transformation for a Gramian pair.

    Both Gramians must be numerically positive definite (full rank at
    ``rank_tol``) for the full transformation to exist; otherwise a
    ``BalancingError`` reports the offending rank.  Passing ``floor``
    regularizes semidefinite pairs by clamping the factor spectra, which
    keeps the transformation well scaled while leaving the dominant
    directions untouched.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("P and Q must be square matrices of equal size")
    K = psd_factor(P, rank_tol=rank_tol, floor=floor)
    L = psd_factor(Q, rank_tol=rank_tol, floor=floor)
    if K.shape[1] < n or L.shape[1] < n:
        raise BalancingError(
            "Gramian numerically singular -- balancing undefined "
            f"(rank P = {K.shape[1]}, rank Q = {L.shape[1]}, n = {n})"
        )
    V, s, Ut = np.linalg.svd(K.T @ L)
    if s[-1] <= 0.0:
        raise BalancingError("Gramian product is numerically singular")
    inv_root = 1.0 / np.sqrt(s)
    S = inv_root[:, None] * (Ut @ L.T)
    Sinv = (K @ V) * inv_root[None, :]
    return BalancingResult(S=S, Sinv=Sinv, hsv=s, pair=pair)


def _tie_cluster_end(hsv, r):
    """Index past the tie cluster containing position r (1-based order)."""
    n = hsv.shape[0]
    while r < n and abs(hsv[r - 1] - hsv[r]) <= HSV_TIE_RTOL * max(hsv[r - 1], 1e-300):
        r += 1
    return r


@dataclass(frozen=True)
class BalancedPartition:
    """A balanced realization partitioned at order ``r``.

    Stores the fully transformed matrices; the 2x2 blocks used by the
    reduction and bound formulas are exposed as properties.
    """

    A: np.ndarray
    N: tuple
    C: np.ndarray
    hsv: np.ndarray
    r: int
    pair: str
    X0: np.ndarray = None
    B: np.ndarray = None
    tie_warning: bool = False

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def A11(self):
        return self.A[: self.r, : self.r]

    @property
    def A12(self):
        return self.A[: self.r, self.r:]

    @property
    def A21(self):
        return self.A[self.r:, : self.r]

    @property
    def A22(self):
        return self.A[self.r:, self.r:]

    @property
    def N11(self):
        return tuple(Nk[: self.r, : self.r] for Nk in self.N)

    @property
    def N12(self):
        return tuple(Nk[: self.r, self.r:] for Nk in self.N)

    @property
    def N21(self):
        return tuple(Nk[self.r:, : self.r] for Nk in self.N)

    @property
    def N22(self):
        return tuple(Nk[self.r:, self.r:] for Nk in self.N)

    @property
    def C1(self):
        return self.C[:, : self.r]

    @property
    def C2(self):
        return self.C[:, self.r:]

    @property
    def X01(self):
        return None if self.X0 is None else self.X0[: self.r]

    @property
    def X02(self):
        return None if self.X0 is None else self.X0[self.r:]

    @property
    def B1(self):
        return None if self.B is None else self.B[: self.r]

    @property
    def B2(self):
        return None if self.B is None else self.B[self.r:]

    @property
    def hsv1(self):
        return self.hsv[: self.r]

    @property
    def hsv2(self):
        return self.hsv[self.r:]


def transform_and_partition(sub, bal, r, tie_policy="extend"):
    """Apply the balancing transformation and partition at order ``r``.

    When the Hankel singular values at the split point coincide within
    ``1e-10`` relative, a ``HsvTieWarning`` is emitted; the default policy
    extends ``r`` to the end of the tied cluster (disjoint block spectra
    matter for the stability guarantees of the reduced models), while
    ``tie_policy="warn"`` keeps the requested order.
    """
    n = bal.n
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= {n}, got {r}")
    if tie_policy not in ("extend", "warn"):
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    tie = False
    if r < n:
        end = _tie_cluster_end(bal.hsv, r)
        if end != r:
            tie = True
            warnings.warn(
                f"Hankel singular values tied across the split at r={r} "
                f"(cluster extends to {end})",
                HsvTieWarning,
            )
            if tie_policy == "extend":
                r = end

    S, Sinv = bal.S, bal.Sinv
    A_t = S @ sub.A @ Sinv
    N_t = tuple(S @ Nk @ Sinv for Nk in sub.N)
    C_t = sub.C @ Sinv
    X0_t = None
    B_t = None
    if bal.pair == "x0":
        if not hasattr(sub, "X0"):
            raise ValueError("x0-pair partition requires a subsystem with X0")
        X0_t = S @ sub.X0
    elif bal.pair == "B":
        if not hasattr(sub, "B"):
            raise ValueError("B-pair partition requires a subsystem with B")
        B_t = S @ sub.B
    else:
        raise ValueError(f"unknown pair tag {bal.pair!r}")
    return BalancedPartition(A=A_t, N=N_t, C=C_t, hsv=bal.hsv.copy(), r=r,
                             pair=bal.pair, X0=X0_t, B=B_t, tie_warning=tie)


def write_hsv_csv(path, hsv):
    """Export Hankel singular values as (index, value) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "hsv"])
        for i, val in enumerate(hsv, start=1):
            writer.writerow([i, f"{val:.12e}"])


def balanced_subsystem(sub, part):
    """Rebuild a subsystem-like object from the transformed matrices.

    Used by tests to verify that the transformed realization has the same
    output as the original under simulation.
    """
    if part.pair == "x0":
        return HomogeneousSubsystem(A=part.A, N=part.N, X0=part.X0,
                                    v0=sub.v0, C=part.C)
    return InhomogeneousSubsystem(A=part.A, B=part.B, N=part.N, C=part.C)
