"""Dense solvers for generalized Lyapunov/Sylvester equations.

The central object is the Lyapunov-type operator

    L(P) = A P + P A^T + (1/gamma^2) sum_k N_k P N_k^T,

whose matrix representation under column-stacking vectorization is

    I (x) A + A (x) I + (1/gamma^2) sum_k N_k (x) N_k.

All Gramians, balancing transformations and error bounds in this package
reduce to solving ``L(P) = -RHS`` (or its adjoint / rectangular coupled
variants) and to locating the spectrum of the operator above.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
import scipy.sparse as sps
import scipy.sparse.linalg as spsla

from .errors import SolveError, StabilityError

#: Largest state dimension for which the n^2 x n^2 operator may be formed densely.
DEFAULT_DIRECT_CAP = 200

# Below this size stability checks use dense eigenvalues of the full operator.
_DENSE_EIG_CAP = 45

# Low-rank bilinear terms switch the direct solver to a Woodbury update of the
# plain Lyapunov solve instead of factorizing the full Kronecker operator.
_SMW_MIN_N = 30


@dataclass
class SolveReport:
    """Outcome of a matrix equation solve.

    ``X`` is the solution, ``residual`` the relative Frobenius residual of
    the equation actually solved (recomputed from the returned ``X``), and
    ``method`` the strategy tag.  ``converged`` implies that the residual
    met the requested tolerance.
    """

    X: np.ndarray
    residual: float
    method: str
    iterations: int
    converged: bool
    tol: float
    detail: str = ""

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be non-negative")
        if self.converged and self.residual > self.tol:
            raise ValueError("converged report with residual above tolerance")

    def to_dict(self, include_solution=False):
        out = {
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
            "detail": self.detail,
        }
        if include_solution:
            out["X"] = self.X.tolist()
        return out


@dataclass(frozen=True)
class GenLyapProblem:
    """Data of a generalized Lyapunov equation ``L(P) = -RHS``.

    With ``adjoint=True`` the transposed operator is used:
    ``A^T P + P A + (1/gamma^2) sum_k N_k^T P N_k = -RHS``.
    """

    A: np.ndarray
    N: tuple
    gamma: float
    RHS: np.ndarray
    adjoint: bool = False

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        N = tuple(np.array(Nk, dtype=float) for Nk in self.N)
        RHS = np.array(self.RHS, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n) or RHS.shape != (n, n):
            raise ValueError("A and RHS must be square matrices of equal size")
        if any(Nk.shape != (n, n) for Nk in N):
            raise ValueError("every N_k must match the shape of A")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        scale = np.linalg.norm(RHS, "fro")
        if scale > 0 and np.linalg.norm(RHS - RHS.T, "fro") > 1e-12 * scale:
            raise ValueError("RHS must be symmetric to 1e-12 relative accuracy")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "RHS", 0.5 * (RHS + RHS.T))

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True)
class GenSylvesterProblem:
    """Data of the coupled rectangular equation

    ``A Y + Y A_r^T + (1/gamma^2) sum_k N_k Y N_{r,k}^T = -RHS``

    with ``Y`` of shape ``n x r``, linking a full-order and a reduced-order
    realization.
    """

    A: np.ndarray
    A_r: np.ndarray
    N: tuple
    N_r: tuple
    gamma: float
    RHS: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        A_r = np.array(self.A_r, dtype=float)
        N = tuple(np.array(Nk, dtype=float) for Nk in self.N)
        N_r = tuple(np.array(Nk, dtype=float) for Nk in self.N_r)
        RHS = np.array(self.RHS, dtype=float)
        n, r = A.shape[0], A_r.shape[0]
        if A.shape != (n, n) or A_r.shape != (r, r):
            raise ValueError("A and A_r must be square")
        if len(N) != len(N_r):
            raise ValueError("N and N_r must have the same number of terms")
        if any(Nk.shape != (n, n) for Nk in N) or any(Nk.shape != (r, r) for Nk in N_r):
            raise ValueError("bilinear terms must match A / A_r in shape")
        if RHS.shape != (n, r):
            raise ValueError(f"RHS must be {n} x {r}, got {RHS.shape}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "A_r", A_r)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "N_r", N_r)
        object.__setattr__(self, "RHS", RHS)

    @property
    def shape(self):
        return (self.A.shape[0], self.A_r.shape[0])


def kronecker_operator(A, N, gamma, cap=DEFAULT_DIRECT_CAP):
    """Dense matrix of the Lyapunov-type operator under column-stacking vec.

    Returns ``I (x) A + A (x) I + (1/gamma^2) sum_k N_k (x) N_k`` of size
    ``n^2 x n^2``.  Refuses to allocate when ``n`` exceeds ``cap``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n > cap:
        raise SolveError(
            f"problem too large for direct method (n={n} exceeds cap={cap})"
        )
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    eye = np.eye(n)
    L = np.kron(eye, A) + np.kron(A, eye)
    c = 1.0 / gamma**2
    for Nk in N:
        L += c * np.kron(Nk, Nk)
    return L


def _is_symmetric(M, rel=1e-12):
    scale = np.linalg.norm(M, "fro")
    return np.linalg.norm(M - M.T, "fro") <= rel * (scale + 1.0)


def _sparse_operator(A, N, gamma):
    n = A.shape[0]
    eye = sps.identity(n, format="csr")
    Asp = sps.csr_matrix(A)
    L = sps.kron(eye, Asp, format="csr") + sps.kron(Asp, eye, format="csr")
    c = 1.0 / gamma**2
    for Nk in N:
        Nsp = sps.csr_matrix(Nk)
        L = L + c * sps.kron(Nsp, Nsp, format="csr")
    return L


def check_generalized_stability(A, N, gamma):
    """Spectral certificate for the Lyapunov-type operator.

    Returns ``(stable, max_real)`` where ``stable`` means the whole spectrum
    of the operator lies strictly in the open left half-plane.  ``max_real``
    is reported for diagnostics and for the gamma search.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if n <= _DENSE_EIG_CAP:
        L = kronecker_operator(A, N, gamma, cap=max(DEFAULT_DIRECT_CAP, n))
        max_real = float(np.max(np.real(np.linalg.eigvals(L))))
        return max_real < 0.0, max_real

    L = _sparse_operator(A, N, gamma)
    n_op = L.shape[0]
    v0 = np.full(n_op, 1.0 / np.sqrt(n_op))  # fixed start vector: deterministic
    symmetric = _is_symmetric(A) and all(_is_symmetric(Nk) for Nk in N)
    try:
        if symmetric:
            vals = spsla.eigsh(
                L, k=1, which="LA", v0=v0, maxiter=20 * n_op, tol=1e-10,
                return_eigenvectors=False,
            )
            max_real = float(vals[0])
        else:
            vals = spsla.eigs(
                L, k=min(6, n_op - 2), which="LR", v0=v0, maxiter=20 * n_op,
                tol=1e-10, return_eigenvectors=False,
            )
            max_real = float(np.max(np.real(vals)))
    except (spsla.ArpackNoConvergence, spsla.ArpackError) as exc:
        raise SolveError(f"eigenvalue solver failed on the Kronecker operator: {exc}")
    return max_real < 0.0, max_real


def min_stabilizing_gamma(A, N, lo, hi, tol=1e-6):
    """Smallest gamma in ``[lo, hi]`` (up to ``tol``) with a stable operator.

    Bisection assuming ``max_real`` is non-increasing in gamma; the
    assumption is asserted on every probe along the search path.  Raises
    ``StabilityError`` when even ``hi`` is unstable.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    probes = []

    def probe(g):
        stable, mr = check_generalized_stability(A, N, g)
        probes.append((g, mr))
        for (g1, m1), (g2, m2) in zip(sorted(probes), sorted(probes)[1:]):
            if m2 > m1 + 1e-9 * (1.0 + abs(m1)):
                raise SolveError(
                    "max_real increased along the gamma path "
                    f"({g1:.6g} -> {g2:.6g}: {m1:.3e} -> {m2:.3e}); "
                    "monotonicity assumption violated"
                )
        return stable

    if not probe(hi):
        raise StabilityError(
            f"not stabilizable in range: operator unstable at gamma={hi}"
        )
    if probe(lo):
        return float(lo)
    g_lo, g_hi = float(lo), float(hi)
    while g_hi - g_lo > tol:
        mid = 0.5 * (g_lo + g_hi)
        if probe(mid):
            g_hi = mid
        else:
            g_lo = mid
    return g_hi


def _lyap_residual(A, RHS, X, adjoint):
    if adjoint:
        R = A.T @ X + X @ A + RHS
    else:
        R = A @ X + X @ A.T + RHS
    scale = np.linalg.norm(RHS, "fro")
    return float(np.linalg.norm(R, "fro") / scale) if scale > 0 else float(
        np.linalg.norm(R, "fro")
    )


def generalized_residual(A, N, gamma, RHS, X, adjoint=False):
    """Relative Frobenius residual of the generalized Lyapunov equation."""
    c = 1.0 / gamma**2
    if adjoint:
        R = A.T @ X + X @ A + RHS
        for Nk in N:
            R += c * (Nk.T @ X @ Nk)
    else:
        R = A @ X + X @ A.T + RHS
        for Nk in N:
            R += c * (Nk @ X @ Nk.T)
    scale = np.linalg.norm(RHS, "fro")
    return float(np.linalg.norm(R, "fro") / scale) if scale > 0 else float(
        np.linalg.norm(R, "fro")
    )


def solve_standard_lyapunov(A, RHS, adjoint=False, tol=1e-10):
    """Solve ``A X + X A^T = -RHS`` (or the adjoint orientation).

    Small problems go through a dense Kronecker solve; larger ones use the
    Schur-form substitution scheme.  The relative residual is verified;
    a near-singular pencil (eigenvalue pair summing to ~0) is reported as
    ``SolveError``.
    """
    A = np.asarray(A, dtype=float)
    RHS = np.asarray(RHS, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or RHS.shape != (n, n):
        raise ValueError("A and RHS must be square of equal size")
    if not _is_symmetric(RHS):
        raise ValueError("RHS must be symmetric")
    Aop = A.T if adjoint else A
    if n <= 20:
        eye = np.eye(n)
        L = np.kron(eye, Aop) + np.kron(Aop, eye)
        try:
            x = np.linalg.solve(L, -RHS.reshape(-1, order="F"))
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"singular Lyapunov operator: {exc}")
        X = x.reshape((n, n), order="F")
        method = "direct-kronecker"
    else:
        try:
            X = spla.solve_continuous_lyapunov(Aop, -RHS)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"Lyapunov solve failed: {exc}")
        method = "bartels-stewart"
    X = 0.5 * (X + X.T)
    residual = _lyap_residual(A, RHS, X, adjoint)
    if not np.isfinite(residual) or residual > tol:
        raise SolveError(
            f"Lyapunov solve missed residual target ({residual:.3e} > {tol:.1e}); "
            "A likely has an eigenvalue pair summing to ~0"
        )
    return SolveReport(X=X, residual=residual, method=method, iterations=0,
                       converged=True, tol=tol)


def _psd_repair(X, context):
    """Clip tiny negative eigenvalues; fail on genuinely indefinite results."""
    w, U = np.linalg.eigh(0.5 * (X + X.T))
    wmax = max(w[-1], 0.0)
    if w[0] < -1e-10 * max(wmax, 1e-300):
        raise SolveError(
            f"{context}: solution is not positive semidefinite "
            f"(min eig {w[0]:.3e}, max eig {wmax:.3e})"
        )
    if w[0] >= 0.0:
        return 0.5 * (X + X.T)
    w = np.clip(w, 0.0, None)
    return (U * w) @ U.T


def _rank_factor(M, rel_tol=1e-12):
    """Split ``M = F @ G.T`` keeping only numerically significant directions."""
    U, s, Vt = np.linalg.svd(M)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[0], 0)), np.zeros((M.shape[1], 0))
    keep = s > rel_tol * s[0]
    root = np.sqrt(s[keep])
    return U[:, keep] * root, Vt[keep].T * root


def _lyap_solver_factory(A):
    """Reusable solver for ``A X + X A^T = M`` (Schur form computed once)."""
    T, Z = spla.schur(A, output="real")
    trsyl = spla.get_lapack_funcs("trsyl", (T, T))

    def solve(M):
        F = Z.T @ M @ Z
        Y, scale, info = trsyl(T, T, F, tranb="T")
        if info < 0:
            raise SolveError(f"trsyl failed with illegal argument {-info}")
        if info == 1:
            raise SolveError(
                "A has an eigenvalue pair summing to ~0; Lyapunov solve singular"
            )
        if scale != 1.0:
            Y = Y / scale
        return Z @ Y @ Z.T

    return solve


class PrefactoredGenLyapSolver:
    """Reusable direct solver for one generalized Lyapunov operator.

    Factorizes the operator once (Woodbury update of the plain Lyapunov
    operator for low-rank bilinear terms, dense Kronecker LU otherwise) so
    that repeated solves against different right-hand sides are cheap.
    ``solve(RHS)`` returns the ``X`` with ``L(X) = -RHS``.
    """

    def __init__(self, A, N, gamma, adjoint=False, cap=DEFAULT_DIRECT_CAP):
        A = np.asarray(A, dtype=float)
        if adjoint:
            A = A.T
            N = tuple(Nk.T for Nk in N)
        self.A = A
        self.N = tuple(np.asarray(Nk, dtype=float) for Nk in N)
        self.c = 1.0 / gamma**2
        self.n = A.shape[0]
        self.adjoint = adjoint
        ranks = [
            int(np.linalg.matrix_rank(
                Nk, tol=1e-12 * max(np.linalg.norm(Nk), 1e-300)))
            for Nk in self.N
        ]
        rank_load = sum(r * r for r in ranks)
        if self.n >= _SMW_MIN_N and rank_load <= max(self.n * self.n // 8, 1):
            self.detail = "woodbury-low-rank"
            self._init_smw()
        else:
            self.detail = "dense-lu"
            self._init_dense(gamma, cap)

    def _init_smw(self):
        self._lyap = _lyap_solver_factory(self.A)
        self._factors = [_rank_factor(Nk) for Nk in self.N]
        base = []
        for Fk, Gk in self._factors:
            rho = Fk.shape[1]
            for i in range(rho):
                for j in range(rho):
                    base.append(self._lyap(np.outer(Fk[:, j], Fk[:, i])))
        self._base = (np.array(base).reshape(len(base), -1)
                      if base else np.zeros((0, self.n * self.n)))
        cols = []
        for Xl in base:
            col = [(Gk.T @ Xl @ Gk).T.ravel() for Fk, Gk in self._factors]
            cols.append(np.concatenate(col))
        W = np.array(cols).T if base else np.zeros((0, 0))
        core = np.eye(W.shape[0]) + self.c * W
        try:
            self._core_lu = spla.lu_factor(core) if base else None
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"Woodbury core factorization failed: {exc}")
        self._kron_lu = None

    def _init_dense(self, gamma, cap):
        L = kronecker_operator(self.A, self.N, gamma, cap=cap)
        try:
            self._kron_lu = spla.lu_factor(L)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolveError(f"dense Kronecker factorization failed: {exc}")
        self._dense_L = L
        self._core_lu = "unused"

    def _apply(self, X):
        out = self.A @ X + X @ self.A.T
        for Nk in self.N:
            out += self.c * (Nk @ X @ Nk.T)
        return out

    def _solve_once(self, RHS):
        if self._kron_lu is not None:
            x = spla.lu_solve(self._kron_lu, -RHS.reshape(-1, order="F"))
            return x.reshape((self.n, self.n), order="F")
        P = self._lyap(-RHS)
        if self._core_lu is None:
            return P
        q = np.concatenate(
            [(Gk.T @ P @ Gk).T.ravel() for Fk, Gk in self._factors]
        )
        z = spla.lu_solve(self._core_lu, q)
        return P - self.c * (z @ self._base).reshape(self.n, self.n)

    def solve(self, RHS, refine=1):
        X = self._solve_once(RHS)
        for _ in range(refine):
            X = X + self._solve_once(self._apply(X) + RHS)
        return X


def _solve_gen_lyap_smw(A, N, c, RHS, max_refine=2, tol=1e-10):
    """Direct solve via a Woodbury update of the plain Lyapunov operator.

    Writing each bilinear term as ``N_k = F_k G_k^T`` of rank ``rho_k``, the
    Kronecker operator is the plain Lyapunov operator plus a rank
    ``sum rho_k^2`` correction, so the exact solution needs one small dense
    solve plus ``sum rho_k^2`` standard Lyapunov solves.
    """
    factors = [_rank_factor(Nk) for Nk in N]

    base_solves = []  # X_l = solution of A X + X A^T = u_l for each update column
    w_rows = []

    lyap0 = _lyap_solver_factory(A)

    for Fk, Gk in factors:
        rho = Fk.shape[1]
        for i in range(rho):
            for j in range(rho):
                Xl = lyap0(np.outer(Fk[:, j], Fk[:, i]))
                base_solves.append(Xl)
    # W[l', l] = <v_{l'}, L0^{-1} u_l> assembled blockwise over the factors.
    for Xl in base_solves:
        col = []
        for Fk, Gk in factors:
            col.append((Gk.T @ Xl @ Gk).T.ravel())
        w_rows.append(np.concatenate(col))
    W = np.array(w_rows).T if base_solves else np.zeros((0, 0))
    size = W.shape[0]
    core = np.eye(size) + c * W

    def solve_once(rhs_mat):
        P0 = lyap0(-rhs_mat)
        if size == 0:
            return P0
        q = np.concatenate([(Gk.T @ P0 @ Gk).T.ravel() for Fk, Gk in factors])
        try:
            z = np.linalg.solve(core, q)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"Woodbury core solve failed: {exc}")
        P = P0.copy()
        for zl, Xl in zip(z, base_solves):
            P -= c * zl * Xl
        return P

    P = solve_once(RHS)
    for _ in range(max_refine):
        R = A @ P + P @ A.T + RHS
        for (Fk, Gk) in factors:
            R += c * ((Fk @ (Gk.T @ P @ Gk)) @ Fk.T)
        scale = max(np.linalg.norm(RHS, "fro"), 1e-300)
        if np.linalg.norm(R, "fro") / scale <= 0.01 * tol:
            break
        P = P + solve_once(R)
    return P


def _solve_gen_lyap_dense(A, N, gamma, RHS, cap, tol):
    L = kronecker_operator(A, N, gamma, cap=cap)
    try:
        lu, piv = spla.lu_factor(L)
        b = -RHS.reshape(-1, order="F")
        x = spla.lu_solve((lu, piv), b)
        # one step of iterative refinement keeps the residual near machine level
        x += spla.lu_solve((lu, piv), b - L @ x)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveError(f"dense Kronecker solve failed: {exc}")
    n = A.shape[0]
    return x.reshape((n, n), order="F")


def solve_generalized_lyapunov(prob, tol=1e-10, max_iter=500, method="auto",
                               check_stability=True, cap=DEFAULT_DIRECT_CAP,
                               psd_repair=True):
    """Solve ``L(P) = -RHS`` for the generalized Lyapunov operator.

    Parameters
    ----------
    prob : GenLyapProblem
        Equation data; ``prob.adjoint`` selects the transposed operator.
    tol : float
        Relative residual target.  The fixed-point strategy additionally
        requires the step change to drop below ``tol``.
    max_iter : int
        Iteration budget for the fixed-point strategy; when exhausted the
        best iterate is returned with ``converged=False``.
    method : str
        ``"direct-kronecker"``, ``"fixed-point"`` or ``"auto"`` (direct up
        to ``cap``, fixed-point beyond).

    Returns
    -------
    SolveReport
        With a symmetric positive semidefinite ``X`` (after clipping of
        roundoff-level negative eigenvalues).
    """
    if check_stability:
        stable, max_real = check_generalized_stability(prob.A, prob.N, prob.gamma)
        if not stable:
            raise StabilityError(
                f"operator not generalized-stable at gamma={prob.gamma} "
                f"(max real part {max_real:.3e})"
            )
    A = prob.A.T if prob.adjoint else prob.A
    N = tuple(Nk.T for Nk in prob.N) if prob.adjoint else prob.N
    RHS = prob.RHS
    n = prob.n
    c = 1.0 / prob.gamma**2

    if method == "auto":
        method = "direct-kronecker" if n <= cap else "fixed-point"
    if method not in ("direct-kronecker", "fixed-point"):
        raise ValueError(f"unknown method {method!r}")

    if method == "direct-kronecker":
        ranks = [min(np.linalg.matrix_rank(Nk, tol=1e-12 * max(np.linalg.norm(Nk), 1e-300)), n)
                 for Nk in N]
        rank_load = sum(r * r for r in ranks)
        if n >= _SMW_MIN_N and rank_load <= max(n * n // 8, 1):
            X = _solve_gen_lyap_smw(A, N, c, RHS, tol=tol)
            detail = "woodbury-low-rank"
        else:
            X = _solve_gen_lyap_dense(A, N, prob.gamma, RHS, cap, tol)
            detail = "dense-lu"
        iterations = 0
    else:
        X, iterations, detail = _fixed_point_iteration(A, N, c, RHS, tol, max_iter)

    X = 0.5 * (X + X.T)
    if psd_repair:
        X = _psd_repair(X, "generalized Lyapunov solve")
    residual = generalized_residual(prob.A, prob.N, prob.gamma, RHS, X,
                                    adjoint=prob.adjoint)
    converged = bool(np.isfinite(residual) and residual <= tol)
    if method == "direct-kronecker" and not converged:
        raise SolveError(
            f"direct solve missed residual target ({residual:.3e} > {tol:.1e})"
        )
    return SolveReport(X=X, residual=residual, method=method,
                       iterations=iterations, converged=converged, tol=tol,
                       detail=detail)


def _fixed_point_iteration(A, N, c, RHS, tol, max_iter):
    """Stationary iteration with lagged bilinear term around Schur-form solves."""
    _solve = _lyap_solver_factory(A)

    def lyap0(M):
        return _solve(-M)

    def residual_of(P):
        R = A @ P + P @ A.T + RHS
        for Nk in N:
            R += c * (Nk @ P @ Nk.T)
        scale = max(np.linalg.norm(RHS, "fro"), 1e-300)
        return np.linalg.norm(R, "fro") / scale

    P = lyap0(RHS)
    best = P
    best_res = residual_of(P)
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        bil = np.zeros_like(P)
        for Nk in N:
            bil += c * (Nk @ P @ Nk.T)
        P_next = lyap0(RHS + bil)
        if not np.all(np.isfinite(P_next)):
            break
        step = np.linalg.norm(P_next - P, "fro") / max(np.linalg.norm(P_next, "fro"),
                                                       1e-300)
        P = P_next
        res = residual_of(P)
        if res < best_res:
            best, best_res = P, res
        if res <= tol and step <= tol:
            return P, iterations, "converged"
        if res > 1e6 * (best_res + 1.0):
            break  # diverging; keep the best iterate seen
    warnings.warn(
        f"fixed-point iteration stopped after {iterations} iterations with "
        f"residual {best_res:.3e} (max_iter exceeded or divergence)"
    )
    return best, iterations, "max_iter exceeded"


def solve_generalized_sylvester(prob, tol=1e-10, cap_dim=12000):
    """Solve ``A Y + Y A_r^T + (1/gamma^2) sum_k N_k Y N_{r,k}^T = -RHS``.

    Uses the direct Kronecker form
    ``(I_r (x) A + A_r (x) I_n + (1/gamma^2) sum_k N_{r,k} (x) N_k)``
    under column-stacking vectorization.
    """
    n, r = prob.shape
    dim = n * r
    if dim > cap_dim:
        raise SolveError(f"coupled solve too large (n*r = {dim} exceeds {cap_dim})")
    c = 1.0 / prob.gamma**2
    M = np.kron(np.eye(r), prob.A) + np.kron(prob.A_r, np.eye(n))
    for Nk, Nrk in zip(prob.N, prob.N_r):
        M += c * np.kron(Nrk, Nk)
    b = -prob.RHS.reshape(-1, order="F")
    try:
        lu, piv = spla.lu_factor(M)
        y = spla.lu_solve((lu, piv), b)
        y += spla.lu_solve((lu, piv), b - M @ y)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveError(f"coupled operator is singular: {exc}")
    Y = y.reshape((n, r), order="F")
    R = prob.A @ Y + Y @ prob.A_r.T + prob.RHS
    for Nk, Nrk in zip(prob.N, prob.N_r):
        R += c * (Nk @ Y @ Nrk.T)
    scale = np.linalg.norm(prob.RHS, "fro")
    residual = float(np.linalg.norm(R, "fro") / scale) if scale > 0 else float(
        np.linalg.norm(R, "fro")
    )
    if not np.isfinite(residual) or residual > tol:
        raise SolveError(
            f"coupled solve missed residual target ({residual:.3e} > {tol:.1e})"
        )
    return SolveReport(X=Y, residual=residual, method="direct-kronecker",
                       iterations=0, converged=True, tol=tol)


@dataclass
class ZPath:
    """Sampled trajectory of the matrix-valued flow ``Z(t)``."""

    t: np.ndarray
    Z: np.ndarray  # shape (len(t), n, n)


def integrate_Z(A, N, gamma, K, T, dt, store_every=1):
    """Classical RK4 integration of the matrix flow

    ``Z'(t) = A Z + Z A^T + (1/gamma^2) sum_k N_k Z N_k^T,  Z(0) = K``.

    Every accepted sample is re-symmetrized.  This integrator is a test
    oracle; it runs with a fixed step on purpose.
    """
    A = np.asarray(A, dtype=float)
    K0 = np.asarray(K, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    c = 1.0 / gamma**2

    def rhs(Z):
        out = A @ Z + Z @ A.T
        for Nk in N:
            out += c * (Nk @ Z @ Nk.T)
        return out

    Z = 0.5 * (K0 + K0.T)
    ts = [0.0]
    Zs = [Z.copy()]
    for step in range(1, steps + 1):
        k1 = rhs(Z)
        k2 = rhs(Z + 0.5 * dt * k1)
        k3 = rhs(Z + 0.5 * dt * k2)
        k4 = rhs(Z + dt * k3)
        Z = Z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Z = 0.5 * (Z + Z.T)
        if step % store_every == 0 or step == steps:
            ts.append(step * dt)
            Zs.append(Z.copy())
    return ZPath(t=np.array(ts), Z=np.array(Zs))
