"""Low-rank compression of fully connected layers.

Compresses a dense layer y = W x + b into two thinner layers, either by
truncated SVD of the weights alone, by SVD with a bias re-fitted to a
target activation batch, or by a decomposition that minimizes the output
error over that batch directly (DALR). Ships activation-rate statistics,
pruning baselines, a minimal network model for end-to-end evaluation,
a greedy joint-rank search over two layers, and a binary file format
plus CLI tying it together.

Convention used throughout: activation matrices are n x p, one column
per sample.
"""

__version__ = "0.1.0"

from .compress import (
    ActivationBatch,
    CompressionMethod,
    FactorPair,
    LinearLayer,
    PruneScore,
    RidgeConfig,
    bias_compensate,
    dalr_compress,
    dalr_from_gram,
    layer_reconstruction_error,
    matched_pruning_budget,
    parameter_fraction,
    prune_by_activation,
    reconstruction_error,
    ridge_augmentation_check,
    svd_truncate,
)
from .errors import (
    BatchError,
    DecompositionError,
    DimensionError,
    NoActivationsError,
    NumericalError,
    RankError,
    SingularSystemError,
)
from .linalg import SvdFactors, frobenius_norm, solve_spd, svd
from .matio import (
    ManifestError,
    MatrixFormatError,
    load_network,
    read_matrix,
    save_network,
    write_matrix,
)
from .network import (
    Activation,
    LabeledBatch,
    Network,
    accuracy,
    apply_pruning,
    extract_activations,
    forward,
    parameter_count,
    splice,
)
from .search import SearchConfig, SearchTrace, joint_rank_search
from .stats import ActivationProfile, activation_rates, compare_profiles

__all__ = [
    "Activation",
    "ActivationBatch",
    "ActivationProfile",
    "BatchError",
    "CompressionMethod",
    "DecompositionError",
    "DimensionError",
    "FactorPair",
    "LabeledBatch",
    "LinearLayer",
    "ManifestError",
    "MatrixFormatError",
    "Network",
    "NoActivationsError",
    "NumericalError",
    "PruneScore",
    "RankError",
    "RidgeConfig",
    "SearchConfig",
    "SearchTrace",
    "SingularSystemError",
    "SvdFactors",
    "accuracy",
    "activation_rates",
    "apply_pruning",
    "bias_compensate",
    "compare_profiles",
    "dalr_compress",
    "dalr_from_gram",
    "extract_activations",
    "forward",
    "frobenius_norm",
    "joint_rank_search",
    "layer_reconstruction_error",
    "load_network",
    "matched_pruning_budget",
    "parameter_count",
    "parameter_fraction",
    "prune_by_activation",
    "read_matrix",
    "reconstruction_error",
    "ridge_augmentation_check",
    "save_network",
    "solve_spd",
    "splice",
    "svd",
    "svd_truncate",
    "write_matrix",
]
