"""Unbiased Monte Carlo estimation for multivariate jump-diffusions.

State-dependent drift, volatility, jump intensity and jump size; exponential
jump-time sampling under a change of measure; random-grid correction weights
for the inter-jump diffusion segments; plus a discretization baseline and a
batch/sweep harness.
"""

from .engine import TrialResult, estimate_once, estimate_once_euler_baseline, sample_jump_time
from .errors import ConfigError, NumericalError
from .harness import (
    EstimateStats,
    Reference,
    SweepResult,
    compute_reference,
    efficiency_curve,
    euler_batch,
    parametrix_batch,
    run_batch,
    sweep,
)
from .models import (
    AssumptionReport,
    ModelSpec,
    Payoff,
    build_model_affine,
    build_model_const1d,
    build_model_trig,
    check_assumptions,
    payoff_call,
    payoff_indicator,
)
from .parametrix import AugmentedState, EstimatorParams, GridPath, SegmentOutcome

__version__ = "0.1.0"
