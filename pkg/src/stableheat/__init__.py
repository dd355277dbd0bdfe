"""Numerical laboratory for the heat equation driven by truncated
heavy-tailed jump noise on [0, T] x [0, L] with absorbing boundaries.

Subpackages by responsibility: ``noise`` (sampling and compensated
integration of the jump field), ``kernel`` (Dirichlet heat kernel),
``coefficients`` (declarative coefficient registry with audited
hypotheses), ``solvers`` (mild fixed-point and spectral projection
solvers), ``experiments`` (seeded Monte Carlo checks), ``cli`` (one
config-driven command-line entry point).
"""

from .coefficients import (
    AuditReport,
    CoefficientSpec,
    InitialCondition,
    affine,
    clipped_linear,
    constant,
    dominates,
    ic_bump,
    ic_constant,
    ic_sine_mode,
    ic_tabulated,
    ic_zero,
    shifted,
    sine_modulated,
    validate_hypothesis,
    zero,
)
from .errors import (
    AccuracyError,
    BlowUpError,
    ConfigError,
    DeltaSingularityError,
    DivergenceError,
    ExperimentFailure,
    HypothesisError,
    NonContractionError,
    NumericalError,
    ParameterError,
    StableHeatError,
    UnobservableEventError,
)
from .experiments import (
    ExperimentReport,
    PositivePartEnergy,
    calibrate_grid_error,
    path_seed,
    positive_part_energy,
    run_comparison,
    run_consistency,
    run_galerkin_convergence,
    run_moment_estimate,
    run_nonnegativity,
    run_stopping_law,
)
from .kernel import KernelEvaluator
from .noise import (
    JumpRecord,
    NoiseRealization,
    SpaceTimeDomain,
    StableParams,
    TruncationSpec,
    compensator_drift,
    expected_jump_count,
    integrate,
    levy_moment,
    restrict,
    sample_noise,
    stopping_time,
    survival_probability,
)
from .solvers import (
    GridSolution,
    GridSpec,
    ModeProjectedNoise,
    ProblemSpec,
    SpectralSolution,
    grid_h_norm,
    grid_lp_norm_p,
    project_noise,
    solve_galerkin,
    solve_mild,
    spectral_to_grid,
    weak_form_residual,
)

__version__ = "0.1.0"
