"""Contact process on fast-evolving scale-free inhomogeneous random graphs.

Event-driven exact simulation of the joint (network, infection) Markov
process, shared-randomness couplings, the wait-and-see upper-bound
process with its supermartingale score monitor, an exact small-N
solver, and the closed-form analytic layer (survival strategies, phase
diagram, metastability exponents, score-inequality verification).
"""

from .model import (
    CustomKernel,
    FactorKernel,
    KernelBoundsError,
    KernelKind,
    ModelParams,
    ParameterError,
    PreferentialAttachmentKernel,
    connection_probability,
    expected_degree,
    kernel_bounds,
    kernel_value,
    update_rate,
)
from .theory import (
    Phase,
    PhaseResult,
    RegimeError,
    ScoringFunction,
    Strategy,
    StrategyConstants,
    a0,
    chernoff_bound,
    classify_phase,
    d_max,
    density_upper_bound,
    lower_density_bound,
    maximal_a,
    scoring_function,
    solve_T,
    strategy_holds,
    theta,
    time_scale,
    verify_condS,
)
from .network import (
    NetworkState,
    degree,
    has_edge,
    resample_vertex,
    sample_stationary,
    write_edge_list,
)
from .dynamics import (
    DensityCurve,
    DualityGap,
    SimConfig,
    Trajectory,
    estimate_I_N,
    estimate_duality_gap,
    geometric_times,
    simulate,
    simulate_coupled_monotone,
)
from .waitsee import (
    ScoreConfig,
    WaitSeeState,
    drift_audit,
    exact_drift,
    score_m,
    ws_simulate,
    ws_simulate_coupled,
)
from .oracle import (
    JointStateSpace,
    build_generator,
    exact_density,
    expected_extinction_time,
)
from .analysis import (
    ExponentFit,
    PlateauEstimate,
    SurvivalCurve,
    fit_exponent,
    plateau,
    survival_curve,
)

__version__ = "0.1.0"
