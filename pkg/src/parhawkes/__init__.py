"""parhawkes: exact maximum-likelihood estimation of multivariate linear
exponential Hawkes processes, parallelized through a work-efficient prefix
scan over compressed transition operators."""

from .core import (
    EventSequence,
    HawkesParams,
    RegConfig,
    branching_matrix,
    spectral_radius,
    validate_sequence,
)
from .estimator import HawkesMLE
from .gradients import (
    GradientSet,
    finite_difference_check,
    grad_states_K,
    grad_states_L,
    gradient,
    nll_and_gradient,
)
from .likelihood import (
    compensator,
    compensator_increments,
    excitation_states,
    intensities,
    intensity_matrix,
    log_likelihood,
    penalized_nll,
)
from .scan import (
    ScanElement,
    ScanElements,
    apply_prefix,
    combine,
    identity_element,
    scan_parallel,
    scan_sequential,
)
from .simulator import SimConfig, gen_hub_spoke, gen_scale_free, simulate_thinning
from .trainer import (
    FitReport,
    TrainConfig,
    default_init_params,
    epoch_batched,
    epoch_unbatched,
    fit,
    optimizer_step,
    run_epoch,
)

__version__ = "0.1.0"

__all__ = [
    "EventSequence",
    "HawkesParams",
    "RegConfig",
    "validate_sequence",
    "branching_matrix",
    "spectral_radius",
    "ScanElement",
    "ScanElements",
    "combine",
    "identity_element",
    "apply_prefix",
    "scan_sequential",
    "scan_parallel",
    "excitation_states",
    "intensities",
    "intensity_matrix",
    "compensator",
    "compensator_increments",
    "log_likelihood",
    "penalized_nll",
    "GradientSet",
    "grad_states_K",
    "grad_states_L",
    "gradient",
    "nll_and_gradient",
    "finite_difference_check",
    "TrainConfig",
    "FitReport",
    "fit",
    "run_epoch",
    "epoch_unbatched",
    "epoch_batched",
    "optimizer_step",
    "default_init_params",
    "SimConfig",
    "simulate_thinning",
    "gen_hub_spoke",
    "gen_scale_free",
    "HawkesMLE",
]
