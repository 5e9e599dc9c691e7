"""Corrugation engine for spacelike surfaces in Minkowski 3-space."""

__version__ = "0.1.0"

from .errors import (
    BudgetExceeded,
    ConeViolation,
    ConfigError,
    DegeneratePlane,
    DomainError,
    EngineError,
    GridMismatch,
    LostSpacelike,
    NotLong,
    NotPSD,
    NotRiemannian,
    SingularMetric,
    UnknownScenario,
)
from .fields import (
    EmbeddingJet,
    Grid,
    LinearForm,
    MetricField,
    c0_distance,
    c1_increment,
    corrugation_frame,
    export_obj,
    isometric_default,
    operator_norm_form,
    operator_norm_map,
    pullback_metric,
)
from .decomp import FormDictionary, PrimitiveDecomposition, build_dictionary, decompose, reconstruct
from .corrugation import (
    amplitude,
    apply_corrugation,
    cp_step,
    phi,
    phi_inverse,
    phi_prime,
    prepare_step,
    radial_factor,
    select_corrugation_number,
    successive_cp,
)
from .bounds import (
    BoundConstants,
    chained_growth_constant,
    compute_constants,
    growth_constant,
    increment_constant,
    psi,
    psi1,
    psi2,
)
from .scheduler import RunLedger, Schedule, make_schedule, run_nash_kuiper, run_stage, stage_metrics
from .scenarios import scenario, SCENARIOS
