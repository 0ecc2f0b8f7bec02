"""polex: execute stochastic policies on controlled SDEs and measure the
weak, strong, and conditional errors of discrete-time policy sampling."""

from .analysis import SlopeFit, SweepSeries, complexity_report, fit_loglog, rate_exponent
from .dynamics import (
    BrownianLattice,
    DynamicsSpec,
    PairedTrajectory,
    SamplingNoise,
    TimeGrid,
    make_lattice,
    make_lattice_batch,
    simulate_aggregated,
    simulate_pair,
    simulate_sampled,
)
from .errors import ConfigError, NotPSDError, NumericsError, PolexError, UnsupportedOperation
from .estimators import (
    EstimateResult,
    TestFunctionSpec,
    ValueToolkit,
    conditional_value,
    conditional_weak_error_quantile,
    naive_estimate,
    policy_gradient_estimate,
    quadratic_variation_estimate,
    shared_noise_estimate,
    strong_error,
    td_residual,
    value_aggregated,
    value_sampled,
    weak_error,
)
from .policy import (
    AggregatedCoefficients,
    CustomSampler,
    FiniteSupport,
    GaussianAffine,
    PolicySpec,
    QuadratureSpec,
    aggregate_coefficients,
    aggregate_reward,
    psd_sqrt,
    sample_action,
    score,
)
from .presets import get_policy_preset, get_preset, policy_preset_names, preset_names

__version__ = "0.1.0"
