"""Lipschitz constant estimation and certified robustness for multilayer perceptrons."""

from .data import Dataset, batches, load_idx, load_mnist, synthetic_blobs, write_idx
from .errors import ConfigError, ConvergenceWarning, FormatError, InvalidInputError, TrainingDivergedError
from .lipschitz import (
    LipschitzEstimate,
    analytical_lipschitz,
    empirical_lipschitz,
    jacobian_variance,
    pattern_exact_relu,
    posttrain_analytical_lipschitz,
    rmt_max_singular,
    spectral_product_bound,
)
from .linalg import matmul, max_singular_value, power_iteration, sample_gaussian_matrix, svd_oracle
from .network import (
    Activation,
    MlpNetwork,
    NetworkSpec,
    activation_apply,
    activation_derivative,
    derivative_variance,
    forward,
    jacobian,
    load_network,
    save_network,
    weight_std_multiplier,
    xavier_init,
)
from .rng import Rng
from .robustness import (
    IntervalBox,
    PerturbationSpec,
    RobustnessReport,
    certified_accuracy,
    certified_radius,
    ibp_certify,
    ibp_propagate,
    margin,
)
from .training import EpochMetrics, TrainConfig, cross_entropy, gradients, sgd_step, train

__version__ = "0.1.0"
