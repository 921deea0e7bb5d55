"""A small residual super-resolution network on the toolkit's autodiff engine.

Architecture: head convolution, B residual blocks (conv -> leaky ReLU ->
conv with skip), one nearest-upsample + convolution per doubling, and a
tail convolution back to image channels. The input of the tail convolution
is the "tap": the place where features are extracted for regularization
and for pooled-feature (DDR) analysis.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, UnsupportedConfigError
from .tensor import Tensor

LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the toy network."""

    in_channels: int = 3
    width: int = 16
    blocks: int = 3
    scale: int = 2

    def validate(self) -> list:
        problems = []
        if self.in_channels < 1:
            problems.append(f"model.in_channels must be >= 1, got {self.in_channels}")
        if self.width < 1:
            problems.append(f"model.width must be >= 1, got {self.width}")
        if self.blocks < 0:
            problems.append(f"model.blocks must be >= 0, got {self.blocks}")
        s = self.scale
        if s < 1 or (s & (s - 1)) != 0:
            problems.append(f"model.scale must be a power of two >= 1, got {s}")
        return problems


class ToyModel:
    """Residual SR network with a named tap point at the tail input."""

    tap_points = ("tail_input",)

    def __init__(self, config: ModelConfig, init_seed: int):
        problems = config.validate()
        if problems:
            raise ContractError("; ".join(problems))
        self.config = config
        self.init_seed = int(init_seed)
        rng = np.random.default_rng(init_seed)
        self.params: dict[str, Tensor] = {}

        def conv_params(name, c_in, c_out):
            # He initialization for the leaky-ReLU fan-in
            std = math.sqrt(2.0 / (c_in * 9))
            self.params[f"{name}.w"] = Tensor(
                rng.normal(scale=std, size=(c_out, c_in, 3, 3)),
                requires_grad=True)
            self.params[f"{name}.b"] = Tensor(np.zeros(c_out),
                                              requires_grad=True)

        f = config.width
        conv_params("head", config.in_channels, f)
        for i in range(config.blocks):
            conv_params(f"block{i}.conv1", f, f)
            conv_params(f"block{i}.conv2", f, f)
        for u in range(int(math.log2(config.scale))):
            conv_params(f"up{u}", f, f)
        conv_params("tail", f, config.in_channels)

    # ------------------------------------------------------------------
    # forward passes
    # ------------------------------------------------------------------

    def _conv(self, x: Tensor, name: str) -> Tensor:
        return T.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"])

    def forward(self, x: Tensor, *, train: bool = False,
                dropout_p: float = 0.0, dropout_rng=None):
        """Run the network; returns ``(output, tap)``.

        ``x`` is (B, C, H, W) or (C, H, W). Channel dropout at the tap is
        applied only when ``train`` is true and ``dropout_p > 0``.
        """
        h = T.leaky_relu(self._conv(x, "head"), LEAKY_SLOPE)
        for i in range(self.config.blocks):
            y = T.leaky_relu(self._conv(h, f"block{i}.conv1"), LEAKY_SLOPE)
            h = h + self._conv(y, f"block{i}.conv2")
        for u in range(int(math.log2(self.config.scale))):
            h = T.leaky_relu(self._conv(T.upsample_nearest(h, 2), f"up{u}"),
                             LEAKY_SLOPE)
        tap = h
        if train and dropout_p > 0.0:
            if dropout_rng is None:
                raise ContractError("dropout requires an explicit rng")
            tap = T.channel_dropout(tap, 1.0 - dropout_p, dropout_rng)
        out = self._conv(tap, "tail")
        return out, tap

    # ------------------------------------------------------------------
    # numpy-facing inference helpers (no gradients, no dropout)
    # ------------------------------------------------------------------

    @staticmethod
    def _to_chw(image: np.ndarray) -> np.ndarray:
        if image.ndim != 3:
            raise ContractError("expected an (H, W, C) image")
        return np.ascontiguousarray(image.transpose(2, 0, 1))

    def restore(self, image: np.ndarray) -> np.ndarray:
        """Upscale an (H, W, C) image; output is clipped to [0, 1]."""
        out, _ = self.forward(Tensor(self._to_chw(image)))
        return np.clip(out.data.transpose(1, 2, 0), 0.0, 1.0)

    def tap_features(self, image: np.ndarray, layer: str = "tail_input"
                     ) -> np.ndarray:
        """Features at a named tap for an (H, W, C) image, as (C, h, w)."""
        if layer not in self.tap_points:
            raise UnsupportedConfigError(
                f"unknown tap point {layer!r}; available: {self.tap_points!r}")
        _, tap = self.forward(Tensor(self._to_chw(image)))
        return tap.data

    # ------------------------------------------------------------------
    # state plumbing for checkpoints
    # ------------------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) ^ set(state)
            raise ContractError(f"parameter name mismatch: {sorted(missing)}")
        for name, value in state.items():
            if value.shape != self.params[name].data.shape:
                raise ContractError(
                    f"shape mismatch for {name}: {value.shape} vs "
                    f"{self.params[name].data.shape}")
            self.params[name].data = np.asarray(value, dtype=np.float64).copy()
