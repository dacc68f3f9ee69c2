"""Balancing-based model order reduction for bilinear control systems
with non-zero initial conditions.

The workflow: split the system into a homogeneous part (driven by the
initial state) and an inhomogeneous part (driven through the input matrix),
compute Gramians for each, balance, truncate or steady-state-eliminate the
weak states, and certify the reduction quality through computable L2 error
bounds.
"""

from .model import (
    BilinearSystem,
    HomogeneousSubsystem,
    InhomogeneousSubsystem,
    InputSignal,
    ReducedHomogeneousModel,
    ReducedInhomogeneousModel,
    bilinear_mask,
    split_system,
)
from .matrixeq import (
    GenLyapProblem,
    GenSylvesterProblem,
    SolveReport,
    check_generalized_stability,
    integrate_Z,
    kronecker_operator,
    min_stabilizing_gamma,
    solve_generalized_lyapunov,
    solve_generalized_sylvester,
    solve_standard_lyapunov,
)
from .gramians import (
    GramianSet,
    compute_P0,
    compute_PB_feasible,
    compute_Q,
    compute_gramian_set,
    pb_lmi_max_eig,
    refine_PB_trace,
)
from .balancing import (
    BalancedPartition,
    BalancingResult,
    balance_pair,
    psd_factor,
    transform_and_partition,
)
from .reduction import (
    check_reduced_stability,
    reduce_B_bt,
    reduce_B_spa,
    reduce_x0_bt,
    reduce_x0_spa,
    reduced_state_gramian,
)
from .bounds import (
    ErrorBoundReport,
    bound_B,
    bound_total,
    bound_x0_apriori,
    bound_x0_posteriori,
    u0_l2norm_sq,
    u_l2norm,
)
from .sim import (
    Trajectory,
    l2_error,
    l2_norm,
    pointwise_abs_error,
    simulate_full,
    simulate_rom_homogeneous,
    simulate_rom_inhomogeneous,
)
from .benchmarks import Heat2dConfig, heat2d, random_stable_system
from .errors import (
    BalancingError,
    BilredError,
    FeasibilityError,
    SimulationError,
    SolveError,
    StabilityError,
)

__version__ = "0.1.0"
