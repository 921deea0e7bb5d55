"""First/second-order feature-statistic alignment losses.

Features from two degraded views of the same content are compared through
their per-channel mean and channel covariance, either directly (linear mode)
or after an elementwise random-Fourier cosine map that approximates an RBF
kernel space (nonlinear mode). Both losses are differentiable end to end via
the tensor engine and vanish exactly when the two views share statistics.

The covariance normalization has two conventions:
    standard      (1/(N-1)) (z'z - (1/N)(1'z)'(1'z)) over N spatial samples
    paper-literal the same bilinear form with constants C and C-1, where C is
                  the channel count; this only rescales the loss
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DegenerateInputError, ShapeMismatchError
from .tensor import Tensor

__all__ = [
    "feature_matrix",
    "spatial_mean",
    "channel_covariance",
    "linear_alignment_loss",
    "RffProjector",
    "rff_map",
    "nonlinear_alignment_loss",
    "AlignmentConfig",
    "alignment_loss",
]


def feature_matrix(features: Tensor) -> Tensor:
    """Reshape a (C, H, W) feature map into an (N, C) matrix, N = H*W rows."""
    if len(features.shape) != 3:
        raise ShapeMismatchError(
            f"feature_matrix expects (C, H, W), got {features.shape}")
    c, h, w = features.shape
    return features.reshape(c, h * w).transpose()


def spatial_mean(features: Tensor) -> Tensor:
    """Per-channel average over spatial positions: (N, C) -> (1, C)."""
    n = features.shape[0]
    if n < 1:
        raise ContractError("spatial_mean needs at least one spatial position")
    ones = T.tensor(np.full((1, n), 1.0 / n))
    return T.matmul(ones, features)


def channel_covariance(features: Tensor, convention: str = "standard") -> Tensor:
    """Channel covariance of an (N, C) feature matrix.

    standard mode is the exact sample covariance over the N spatial rows;
    paper-literal keeps the printed constants (C and C-1) instead.
    """
    n, c = features.shape
    if convention == "standard":
        if n < 2:
            raise DegenerateInputError(
                "standard covariance needs at least 2 spatial positions")
        inner, outer = 1.0 / (n - 1), 1.0 / n
    elif convention == "paper-literal":
        if c < 2:
            raise DegenerateInputError("paper-literal covariance needs C >= 2")
        inner, outer = 1.0 / (c - 1), 1.0 / c
    else:
        raise ContractError(f"unknown covariance convention {convention!r}")
    ones = T.tensor(np.ones((1, n)))
    colsum = T.matmul(ones, features)            # (1, C)
    gram = T.matmul(features.T, features)        # (C, C)
    return (gram - T.matmul(colsum.T, colsum) * outer) * inner


def _sq_frobenius(a: Tensor, b: Tensor) -> Tensor:
    d = a - b
    return (d * d).sum()


def linear_alignment_loss(x: Tensor, x_prime: Tensor,
                          convention: str = "standard") -> Tensor:
    """Squared Frobenius distance of covariance plus mean of two (N, C) views."""
    if x.shape != x_prime.shape:
        raise ShapeMismatchError(
            f"linear_alignment_loss: shapes {x.shape} vs {x_prime.shape}")
    cov_term = _sq_frobenius(channel_covariance(x, convention),
                             channel_covariance(x_prime, convention))
    mean_term = _sq_frobenius(spatial_mean(x), spatial_mean(x_prime))
    return cov_term + mean_term


@dataclass(frozen=True)
class RffProjector:
    """Frozen sample of (omega, phi) pairs defining the cosine feature map.

    omega ~ N(0, 1) and phi ~ U(0, 2pi); the same projector must be applied
    to both views, otherwise the loss would not vanish at x = x'.
    """

    omegas: np.ndarray
    phis: np.ndarray
    seed: int

    @classmethod
    def from_seed(cls, n: int, seed: int) -> "RffProjector":
        if n < 1:
            raise ContractError("RffProjector needs n >= 1 features")
        rng = np.random.default_rng(seed)
        omegas = rng.normal(size=n)
        phis = rng.uniform(0.0, 2.0 * math.pi, size=n)
        return cls(omegas=omegas, phis=phis, seed=int(seed))

    @property
    def n(self) -> int:
        return self.omegas.shape[0]


def rff_map(features: Tensor, projector: RffProjector) -> Tensor:
    """Map each scalar of an (N, C) matrix through the projector's n cosines.

    Output is (N, n*C) with columns grouped feature-major.
    """
    return T.rff_cos_map(features, projector.omegas, projector.phis)


def nonlinear_alignment_loss(x: Tensor, x_prime: Tensor,
                             projector: RffProjector,
                             convention: str = "standard") -> Tensor:
    """Linear alignment applied to the RFF-mapped features."""
    if x.shape != x_prime.shape:
        raise ShapeMismatchError(
            f"nonlinear_alignment_loss: shapes {x.shape} vs {x_prime.shape}")
    return linear_alignment_loss(rff_map(x, projector),
                                 rff_map(x_prime, projector), convention)


@dataclass
class AlignmentConfig:
    """Configuration for the alignment regularizer."""

    mode: str = "linear"                 # "linear" | "nonlinear"
    rff_dim: int = 8
    rff_seed: int = 0
    weight: float = 1.0
    covariance_convention: str = "standard"
    _projector: RffProjector | None = field(default=None, repr=False,
                                            compare=False)

    def validate(self) -> list[str]:
        problems = []
        if self.mode not in ("linear", "nonlinear"):
            problems.append(f"alignment.mode must be linear|nonlinear, got {self.mode!r}")
        if self.rff_dim < 1:
            problems.append(f"alignment.rff_dim must be >= 1, got {self.rff_dim}")
        if not (math.isfinite(self.weight) and self.weight >= 0.0):
            problems.append(f"alignment.weight must be finite and >= 0, got {self.weight}")
        if self.covariance_convention not in ("standard", "paper-literal"):
            problems.append(
                "alignment.covariance_convention must be standard|paper-literal, "
                f"got {self.covariance_convention!r}")
        return problems

    def projector(self) -> RffProjector:
        if self._projector is None or self._projector.n != self.rff_dim \
                or self._projector.seed != self.rff_seed:
            self._projector = RffProjector.from_seed(self.rff_dim, self.rff_seed)
        return self._projector


def alignment_loss(x: Tensor, x_prime: Tensor, config: AlignmentConfig) -> Tensor:
    """Dispatch to the configured loss, scaled by the regularization weight.

    weight = 0 short-circuits to an exact zero detached from the graph.
    """
    problems = config.validate()
    if problems:
        raise ContractError("; ".join(problems))
    if config.weight == 0.0:
        return T.tensor(0.0)
    if config.mode == "linear":
        loss = linear_alignment_loss(x, x_prime, config.covariance_convention)
    else:
        loss = nonlinear_alignment_loss(x, x_prime, config.projector(),
                                        config.covariance_convention)
    return loss * config.weight
