"""Single-copy repeated QND measurement: trajectories, martingales, statistics."""

__version__ = "0.1.0"

from .gaussian import GaussianModel, YmDistribution, apply_gaussian, mu_closed_form, outcome_density, ym_pdf
from .hilbert import (
    DensityMatrix,
    Projector,
    PureState,
    ValidationError,
    ZeroWeightBlockError,
    density_from_pure,
    purity,
    trace_distance,
)
from .martingale import (
    asymptotic_fixed_point_check,
    decay_curve,
    exact_onestep_diag,
    exact_onestep_offdiag,
    martingale_reports,
    purity_submartingale_check,
)
from .povm import (
    AmbiguousDegeneracyError,
    DegeneracyClass,
    DiscreteModel,
    InvalidModelError,
    ObservableSpec,
    ZeroProbabilityError,
    apply_measurement,
    binned_gaussian_model,
    build_degeneracy_classes,
    class_weights,
    load_model_json,
    mu_matrix,
    outcome_distribution,
    validate_model,
)
from .stats import born_rule_test, ensemble_mode_sampler, luders_batch_check, ym_compare, ym_from_records
from .trajectory import (
    FreeEvolution,
    NumericalAbort,
    TrajectoryConfig,
    TrajectoryRecord,
    joint_probability_exact,
    product_form_state,
    run_ensemble,
    run_trajectory,
)

__all__ = [name for name in dir() if not name.startswith("_")]
