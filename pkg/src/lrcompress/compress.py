"""Layer compression operators.

Three ways to replace a fully connected layer's weight matrix W (m x n)
with a rank-k factor pair A @ B.T, plus activation-based pruning
baselines:

* svd_truncate     - keep the k largest singular triplets of W.
* bias_compensate  - re-fit the bias so the approximation error has
                     zero mean over a target activation batch.
* dalr_compress    - pick the rank-k map minimizing the *output* error
                     ||W X - A B^T X||_F over the batch, with a ridge
                     term keeping the Gram system well conditioned.
* prune_by_activation - drop the least active output units.

Activation matrices are n x p: one column per sample.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg
from .errors import (
    BatchError,
    DecompositionError,
    DimensionError,
    RankError,
    SingularSystemError,
)

__all__ = [
    "ActivationBatch",
    "CompressionMethod",
    "FactorPair",
    "LinearLayer",
    "PruneScore",
    "RidgeConfig",
    "bias_compensate",
    "compensated_bias",
    "dalr_compress",
    "dalr_from_gram",
    "layer_reconstruction_error",
    "matched_pruning_budget",
    "parameter_fraction",
    "prune_by_activation",
    "prune_with_scores",
    "reconstruction_error",
    "ridge_augmentation_check",
    "select_top_units",
    "svd_truncate",
    "unit_activation_scores",
]


class CompressionMethod(str, Enum):
    SVD = "svd"
    SVD_BC = "svd-bc"
    DALR = "dalr"


class PruneScore(str, Enum):
    MEAN = "mean"
    MAX = "max"


@dataclass(frozen=True)
class LinearLayer:
    """Weights W (m x n) plus bias b (length m): y = W x + b."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = linalg.as_matrix(self.weights, "layer weights")
        b = linalg.as_vector(self.bias, "layer bias", length=w.shape[0])
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Layer outputs W x + b for a batch of column samples."""
        return linalg.matmul(self.weights, x) + self.bias[:, None]


@dataclass(frozen=True)
class ActivationBatch:
    """p input samples stored as the columns of x (n x p).

    The per-dimension mean over the columns is computed on construction.
    When post_relu is set the entries must be non-negative; that is what
    a batch recorded after a ReLU looks like.
    """

    x: np.ndarray
    post_relu: bool = False
    mean: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError(f"activation batch must be 2-D, got shape {x.shape}")
        if x.shape[1] == 0:
            raise BatchError("activation batch must contain at least one sample")
        if x.shape[0] == 0:
            raise DimensionError("activation batch must have at least one dimension")
        if not np.isfinite(x).all():
            raise BatchError("activation batch contains non-finite entries")
        if self.post_relu and (x < 0).any():
            raise BatchError("post-ReLU activation batch must be non-negative")
        x = np.ascontiguousarray(x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mean", x.mean(axis=1))

    @property
    def dimensions(self) -> int:
        return self.x.shape[0]

    @property
    def samples(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class RidgeConfig:
    """Ridge weight for the Gram system (X X^T + lam I).

    lam=None picks the scale-aware default 1e-3 * trace(X X^T) / n so the
    system stays well conditioned whatever the activation scale is.
    """

    lam: float | None = None

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0.0:
            raise RankError(f"ridge lambda must be non-negative, got {self.lam}")

    def resolve(self, x: np.ndarray) -> float:
        if self.lam is not None:
            return float(self.lam)
        return 1e-3 * float(np.sum(x * x)) / x.shape[0]

    def resolve_from_gram(self, xxt: np.ndarray) -> float:
        if self.lam is not None:
            return float(self.lam)
        return 1e-3 * float(np.trace(xxt)) / xxt.shape[0]


@dataclass(frozen=True)
class FactorPair:
    """Rank-k factors replacing one layer with two: x -> a @ (b.T @ x) + new_bias."""

    a: np.ndarray
    b: np.ndarray
    new_bias: np.ndarray
    rank: int
    method: CompressionMethod
    lam: float = 0.0

    def __post_init__(self):
        a = linalg.as_matrix(self.a, "factor a")
        b = linalg.as_matrix(self.b, "factor b")
        if a.shape[1] != self.rank or b.shape[1] != self.rank:
            raise RankError(
                f"factor columns {a.shape[1]}/{b.shape[1]} do not match rank {self.rank}"
            )
        m, n = a.shape[0], b.shape[0]
        if not 1 <= self.rank <= min(m, n):
            raise RankError(f"rank {self.rank} outside [1, {min(m, n)}] for {m}x{n} layer")
        if self.lam < 0:
            raise RankError(f"lambda must be non-negative, got {self.lam}")
        bias = linalg.as_vector(self.new_bias, "new bias", length=m)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "new_bias", bias)

    def product(self) -> np.ndarray:
        """The implied m x n weight approximation a @ b.T."""
        return self.a @ self.b.T

    def saves_parameters(self) -> bool:
        """True when the two new layers hold fewer weights than the original."""
        m, n = self.a.shape[0], self.b.shape[0]
        return (m + n) * self.rank < m * n


def _check_rank(k: int, m: int, n: int) -> None:
    if not isinstance(k, (int, np.integer)) or not 1 <= int(k) <= min(m, n):
        raise RankError(f"rank {k} outside [1, {min(m, n)}] for {m}x{n} layer")


def svd_truncate(layer: LinearLayer, k: int) -> FactorPair:
    """Keep the k most significant singular triplets of the weights.

    The singular values are folded into the input-side factor, so
    a = U_k and b = V_k * S_k; the bias is untouched.
    """
    m, n = layer.weights.shape
    _check_rank(k, m, n)
    f = linalg.svd(layer.weights).truncated(int(k))
    a = f.u
    b = (f.vt.T * f.s).copy()
    return FactorPair(a=a, b=b, new_bias=layer.bias.copy(), rank=int(k),
                      method=CompressionMethod.SVD)


def compensated_bias(layer: LinearLayer, pair: FactorPair, xbar: np.ndarray) -> np.ndarray:
    """Bias that cancels the mean output shift of the approximation residual."""
    xbar = linalg.as_vector(xbar, "mean input", length=layer.in_features)
    residual = layer.weights - pair.product()
    return layer.bias + residual @ xbar


def bias_compensate(layer: LinearLayer, pair: FactorPair, acts: ActivationBatch,
                    use_sum: bool = False) -> FactorPair:
    """Replace the pair's bias so the output error is zero-mean on the batch.

    use_sum swaps the mean input for the plain column sum; it exists for
    compatibility with conventions that skip the 1/p normalization and is
    not the least-squares optimum.
    """
    if pair.a.shape[0] != layer.out_features or pair.b.shape[0] != layer.in_features:
        raise DimensionError(
            f"factor shapes {pair.a.shape}/{pair.b.shape} do not match "
            f"{layer.out_features}x{layer.in_features} layer"
        )
    if acts.dimensions != layer.in_features:
        raise DimensionError(
            f"activation batch has {acts.dimensions} dimensions, "
            f"layer expects {layer.in_features}"
        )
    xbar = acts.mean * acts.samples if use_sum else acts.mean
    new_bias = compensated_bias(layer, pair, xbar)
    return dataclasses.replace(pair, new_bias=new_bias, method=CompressionMethod.SVD_BC)


def dalr_compress(layer: LinearLayer, acts: ActivationBatch, k: int,
                  ridge: RidgeConfig = RidgeConfig(0.0),
                  compensate_bias: bool = False) -> FactorPair:
    """Rank-k decomposition minimizing the output error over the batch.

    Solves min ||Z - C X||_F^2 + lam ||C||_F^2 over rank-k C with Z = W X:
    a takes the top-k left singular vectors of Z, and b.T solves the
    ridge-regularized Gram system a.T Z X^T (X X^T + lam I)^-1.

    The original bias is kept; compensate_bias=True additionally re-fits
    it against the batch mean (off by default, it rarely helps once the
    decomposition already saw the activations).
    """
    m, n = layer.weights.shape
    _check_rank(k, m, n)
    if acts.dimensions != n:
        raise DimensionError(
            f"activation batch has {acts.dimensions} dimensions, layer expects {n}"
        )
    lam = ridge.resolve(acts.x)
    if lam == 0.0 and acts.samples < n:
        raise SingularSystemError(
            f"X X^T is rank-deficient with {acts.samples} samples for {n} dimensions; "
            "lambda > 0 is required"
        )
    x = acts.x
    z = linalg.matmul(layer.weights, x)
    u_k = linalg.svd(z).truncated(int(k)).u
    gram = linalg.add_scaled_identity(x @ x.T, lam)
    # b = (X X^T + lam I)^-1 X Z^T U_k, the transpose of the k x n solution row block
    b = linalg.solve_spd(gram, x @ (z.T @ u_k))
    pair = FactorPair(a=u_k, b=b, new_bias=layer.bias.copy(), rank=int(k),
                      method=CompressionMethod.DALR, lam=lam)
    if compensate_bias:
        pair = dataclasses.replace(pair, new_bias=compensated_bias(layer, pair, acts.mean))
    return pair


def dalr_from_gram(layer: LinearLayer, xxt: np.ndarray, k: int,
                   ridge: RidgeConfig = RidgeConfig(0.0)) -> FactorPair:
    """DALR from the accumulated Gram matrix X X^T instead of raw samples.

    The left singular vectors of Z = W X are recovered as eigenvectors of
    Z Z^T = W (X X^T) W^T, so a streamed single-pass accumulation of X X^T
    is all the activation data needed. Used by the CLI for batches too
    large to hold in memory.
    """
    m, n = layer.weights.shape
    _check_rank(k, m, n)
    xxt = linalg.as_matrix(xxt, "gram matrix")
    if xxt.shape != (n, n):
        raise DimensionError(f"gram matrix shape {xxt.shape} does not match layer input {n}")
    lam = ridge.resolve_from_gram(xxt)
    w = layer.weights
    zzt = w @ xxt @ w.T
    zzt = 0.5 * (zzt + zzt.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(zzt)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(
            f"eigendecomposition failed for {m}x{m} Gram matrix"
        ) from exc
    order = np.argsort(-eigvals, kind="stable")[: int(k)]
    u_k, _ = linalg.fix_column_signs(np.ascontiguousarray(eigvecs[:, order]))
    gram = linalg.add_scaled_identity(xxt, lam)
    b = linalg.solve_spd(gram, xxt @ (w.T @ u_k))
    return FactorPair(a=u_k, b=b, new_bias=layer.bias.copy(), rank=int(k),
                      method=CompressionMethod.DALR, lam=lam)


def ridge_augmentation_check(z, x, c, lam: float) -> tuple[float, float]:
    """Evaluate the ridge objective two ways; used by tests.

    Returns (||Z - C X||_F^2 + lam ||C||_F^2, ||Z* - C X*||_F^2) where
    X* = [X  sqrt(lam) I] and Z* = [Z  0]. The two must agree.
    """
    z = linalg.as_matrix(z, "Z")
    x = linalg.as_matrix(x, "X")
    c = linalg.as_matrix(c, "C")
    if c.shape != (z.shape[0], x.shape[0]):
        raise DimensionError(f"C shape {c.shape} does not match Z {z.shape} and X {x.shape}")
    if z.shape[1] != x.shape[1]:
        raise DimensionError(f"Z shape {z.shape} and X shape {x.shape} disagree on samples")
    direct = linalg.frobenius_norm(z - c @ x) ** 2 + lam * linalg.frobenius_norm(c) ** 2
    n = x.shape[0]
    x_star = np.hstack([x, np.sqrt(lam) * np.eye(n)])
    z_star = np.hstack([z, np.zeros((z.shape[0], n))])
    augmented = linalg.frobenius_norm(z_star - c @ x_star) ** 2
    return direct, augmented


def unit_activation_scores(layer: LinearLayer, acts: ActivationBatch,
                           score: PruneScore) -> np.ndarray:
    """Per-output-unit activity: MEAN or MAX of max(0, W x + b) over the batch."""
    if acts.dimensions != layer.in_features:
        raise DimensionError(
            f"activation batch has {acts.dimensions} dimensions, "
            f"layer expects {layer.in_features}"
        )
    responses = np.maximum(layer.apply(acts.x), 0.0)
    if score == PruneScore.MEAN:
        return responses.mean(axis=1)
    return responses.max(axis=1)


def select_top_units(scores: np.ndarray, keep: int) -> np.ndarray:
    """Indices of the keep highest scores, ties broken by lowest index."""
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return np.sort(order[:keep])


def prune_with_scores(layer: LinearLayer, scores: np.ndarray,
                      keep: int) -> tuple[LinearLayer, np.ndarray]:
    scores = linalg.as_vector(scores, "unit scores", length=layer.out_features)
    if not 1 <= keep <= layer.out_features:
        raise RankError(f"keep {keep} outside [1, {layer.out_features}]")
    kept = select_top_units(scores, int(keep))
    pruned = LinearLayer(layer.weights[kept, :].copy(), layer.bias[kept].copy())
    return pruned, kept


def prune_by_activation(layer: LinearLayer, acts: ActivationBatch, keep: int,
                        score: PruneScore = PruneScore.MEAN) -> tuple[LinearLayer, np.ndarray]:
    """Keep the *keep* most active output units of the layer.

    Returns the reduced layer together with the kept row indices so the
    caller can drop the matching input columns of the next layer.
    """
    scores = unit_activation_scores(layer, acts, score)
    return prune_with_scores(layer, scores, keep)


def matched_pruning_budget(m: int, n: int, k: int) -> int:
    """Units to keep so pruning matches the parameter count of a rank-k pair."""
    if m <= 0 or n <= 0 or k <= 0:
        raise RankError(f"dimensions and rank must be positive, got m={m} n={n} k={k}")
    return max(1, min(m, round(k * (m + n) / n)))


def parameter_fraction(m: int, n: int, k: int) -> float:
    """Compressed share of the original weight count: (m + n) k / (m n)."""
    if m <= 0 or n <= 0 or k <= 0:
        raise RankError(f"dimensions and rank must be positive, got m={m} n={n} k={k}")
    return (m + n) * k / (m * n)


def reconstruction_error(y_true, y_hat) -> float:
    """Frobenius norm of the difference between two output batches."""
    y_true = linalg.as_matrix(y_true, "reference outputs")
    y_hat = linalg.as_matrix(y_hat, "approximate outputs")
    if y_true.shape != y_hat.shape:
        raise DimensionError(f"output shapes {y_true.shape} and {y_hat.shape} differ")
    return linalg.frobenius_norm(y_true - y_hat)


def layer_reconstruction_error(layer: LinearLayer, pair: FactorPair, x) -> float:
    """Output error of the factor pair against the original layer on a batch."""
    x = linalg.as_matrix(x, "inputs")
    y = layer.apply(x)
    y_hat = pair.a @ (pair.b.T @ x) + pair.new_bias[:, None]
    return reconstruction_error(y, y_hat)
