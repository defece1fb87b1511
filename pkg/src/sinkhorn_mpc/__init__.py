"""Multi-agent MPC with online entropic optimal transport assignment."""

from .analysis import (
    BoundReport,
    DecayReport,
    EquilibriumAnchor,
    EquilibriumReport,
    SweepRow,
    dual_objective,
    entropic_cost,
    entropic_cost_gradient,
    epsilon_sweep,
    equilibrium_residual,
    exponential_equilibrium_check,
    find_equilibrium,
    lyapunov_V,
    ultimate_bound,
)
from .assignment import Assignment, brute_force_assignment, hungarian
from .mpc import (
    LinearSystem,
    MpcLaw,
    build_mpc_law,
    discrete_gramian,
    discretize_euler,
    mpc_control,
    mpc_cost,
    open_loop_sequence,
)
from .navigator import barycentric_targets
from .numerics import (
    continuous_gramian,
    mat_power,
    matrix_exponential,
    spectral_radius,
)
from .otcore import (
    Coupling,
    FixedCount,
    GibbsKernel,
    Marginals,
    MarginalTolerance,
    ScalingPair,
    StoppingPolicy,
    contraction_factor,
    coupling_from,
    gibbs_kernel,
    hilbert_metric,
    marginal_violation,
    sinkhorn_solve,
    sinkhorn_step,
)
from .simulator import (
    FleetScenario,
    SimState,
    TrajectoryLog,
    kernel_at,
    run,
    run_baseline_fixed,
    run_baseline_permutation,
    step,
)

__version__ = "0.1.0"
