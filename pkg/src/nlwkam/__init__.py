"""KAM normal-form engine for the 1-D nonlinear wave equation on truncated mode sets."""

__version__ = "0.1.0"

from .multiindex import MultiIndex, admits_zero_sum, gap_terms, rearrangement, starred_rearrangement
from .hampoly import (
    ADAPTED,
    PLAIN,
    AdaptedKey,
    CompiledField,
    HamiltonianPoly,
    MonomialKey,
    NormPlus,
    TruncationError,
    amono,
    mono,
    class_split,
    evaluate,
    norm_plus,
    norm_rho,
    to_adapted,
    to_plain,
    vector_field,
)
from .poisson import bracket, lie_compose
from .resonance import (
    FrequencyModel,
    ResonanceError,
    check_condition_1,
    check_condition_2,
    compensation_terms,
    divisor,
    enumerate_l,
    measure_estimate,
    sample_omega,
)
from .homological import averages, residual, solve
from .kam import (
    ContractionError,
    KamSchedule,
    KamState,
    freeze_parameters,
    frequency_shift,
    initial_state,
    kam_step,
    run,
)
from .nlw import (
    IntegratorError,
    NlwConfig,
    build_hamiltonian,
    coupling,
    flow,
    initial_torus,
    linear_stability,
    torus_residual,
)
