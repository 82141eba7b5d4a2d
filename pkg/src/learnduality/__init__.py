"""Fluctuation statistics of SGD jumps in a two-neuron toy network.

The jumps a trained network would take on fresh inputs are rotated onto
their principal axis; their distribution is predicted from the input
density through the Jacobian of the input-to-jump map and compared with
log-binned histograms of simulated jumps.
"""

from .compositions import (
    CATALOGUE,
    PIECEWISE_CE,
    RELU_P2,
    RELU_P4,
    SIGMOID_CE,
    SIGMOID_MSE,
    Composition,
    get_composition,
)
from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    DualityError,
    EmptyHistogramError,
    EstimationError,
    InsufficientDataError,
    MultiBranchError,
    NumericError,
    OutOfRegimeError,
    SingularityError,
    StructuralError,
)
from .septuple import (
    ActivationKind,
    LossKind,
    NetworkState,
    TrainableMap,
    activation_pass,
    activation_step,
    assemble,
    numeric_gradient,
    sgd_step,
    toy_map,
)
from .toy import (
    MINUS,
    PLUS,
    ClassSpec,
    EquilibriumCriterion,
    FluctuationSample,
    JumpSamples,
    ToyState,
    collect_jumps,
    train_to_equilibrium,
)
from .duality import (
    CDConstants,
    Rotation,
    cd_constants,
    estimate_theta,
    predicted_density,
    predicted_exponent,
    rotate,
    scaling_form,
    toy_jacobian,
)
from .analysis import LogHistogram, PowerLawFit, fit_power_law, log_bin
from .special import IntegralResult, expint_approx, expint_quadrature
from .experiments import ExperimentConfig, ExperimentReport, run_experiment, run_suite

__version__ = "0.1.0"
