"""Benchmark systems: a 2-D boundary-controlled heat model and seeded
random stable systems for the property suites.

The heat model discretizes the unit square with a five-point stencil on a
``k x k`` interior grid (spacing ``h = 1/(k+1)``, x-fastest ordering).  The
control acts in two ways: as the Dirichlet temperature on the left edge
(eliminated into ``B`` with entries ``1/h^2``) and as a temperature
feedback ``n . grad X = u X`` on the right edge, whose one-sided difference
folds into the bilinear matrix ``N`` as diagonal entries ``1/h`` at the
right-edge nodes.  Bottom and top edges are held at zero and eliminated.
The initial temperature is constant in space and the output averages the
temperature field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StabilityError
from .matrixeq import check_generalized_stability
from .model import BilinearSystem


@dataclass(frozen=True)
class Heat2dConfig:
    """Parameters of the heat-transfer benchmark.

    ``robin_scale`` rescales the right-edge feedback coefficient (the
    literature is not unanimous on the one-sided-difference constant, so it
    is exposed as a knob; 1.0 gives ``1/h``).
    """

    k: int = 10
    initial_value: float = 0.1
    robin_scale: float = 1.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need at least 2 grid points per direction")


def heat2d(cfg=None, **kwargs):
    """Assemble the heat-transfer benchmark as a ``BilinearSystem``.

    ``n = k^2``, single input, single (averaged) output, all-ones initial
    state basis with ``v0 = initial_value``.
    """
    if cfg is None:
        cfg = Heat2dConfig(**kwargs)
    elif kwargs:
        raise ValueError("pass either a config or keyword arguments, not both")
    k = cfg.k
    n = k * k
    h = 1.0 / (k + 1)
    inv_h2 = 1.0 / h**2

    def idx(i, j):  # i: x index (fastest), j: y index
        return j * k + i

    A = np.zeros((n, n))
    B = np.zeros((n, 1))
    N = np.zeros((n, n))
    for j in range(k):
        for i in range(k):
            row = idx(i, j)
            A[row, row] = -4.0 * inv_h2
            if i > 0:
                A[row, idx(i - 1, j)] = inv_h2
            else:
                B[row, 0] = inv_h2  # left edge: Dirichlet control
            if i < k - 1:
                A[row, idx(i + 1, j)] = inv_h2
            else:
                N[row, row] = cfg.robin_scale / h  # right edge: feedback term
            if j > 0:
                A[row, idx(i, j - 1)] = inv_h2
            if j < k - 1:
                A[row, idx(i, j + 1)] = inv_h2

    C = np.full((1, n), 1.0 / n)
    X0 = np.ones((n, 1))
    v0 = np.array([cfg.initial_value])
    return BilinearSystem(A=A, B=B, C=C, N=(N,), X0=X0, v0=v0)


def random_stable_system(n, m=1, p=1, q=1, bilinear_scale=0.2, seed=0,
                         margin=0.5, gamma_check=1.0, max_rescale=40):
    """Seeded random system that is generalized-stable at ``gamma_check``.

    ``A`` is a shifted random matrix, moved left by the top eigenvalue of
    its symmetric part plus ``margin``, so it is Hurwitz by construction.
    The bilinear terms start at ``bilinear_scale`` and are halved until the
    stability certificate holds (rejection sampling with a finite budget).
    All draws happen before the rescaling loop, so results are bit-stable
    under a fixed seed.
    """
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    shift = 0.5 * float(np.linalg.eigvalsh(M + M.T)[-1]) + margin
    A = M - shift * np.eye(n)
    N = [bilinear_scale * rng.standard_normal((n, n)) for _ in range(m)]
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    X0 = rng.standard_normal((n, q))
    v0 = rng.standard_normal(q)
    for _ in range(max_rescale):
        stable, _ = check_generalized_stability(A, N, gamma_check)
        if stable:
            break
        N = [0.5 * Nk for Nk in N]
    else:
        raise StabilityError(
            "rejection budget exhausted while scaling the bilinear terms"
        )
    return BilinearSystem(A=A, B=B, C=C, N=tuple(N), X0=X0, v0=v0)
