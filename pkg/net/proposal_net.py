"""
Desk-scale point-proposal network.

For every anchor cell a P x P patch centred on the anchor is fed through one
tanh hidden layer and a 3-unit linear head (dx, dy, logit). The regressed
position is anchor + (dx, dy) and the score is sigmoid(logit). Gradients are
computed by hand in reverse mode.
"""

import math
from typing import Any, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import Field, field_validator, model_validator
from scipy.special import expit

from app.config import ModelConfig
from app.errors import ContractViolation, NonFiniteInputError, ShapeMismatchError
from app.models import AnchorGridMeta, ArrayModel, ProposalSet, readonly_array

OUTPUT_UNITS = 3  # dx, dy, logit


def parameter_count(patch_size: int, hidden_width: int) -> int:
    """P^2 * H + H + 3 * H + 3."""
    return patch_size ** 2 * hidden_width + hidden_width + OUTPUT_UNITS * hidden_width + OUTPUT_UNITS


class ModelParams(ArrayModel):
    """Flat parameter vector theta plus the hyperparameters that shape it."""

    theta: np.ndarray
    patch_size: int = Field(ge=1)
    hidden_width: int = Field(ge=1)
    stride: int = Field(ge=1)

    @field_validator("theta", mode="before")
    @classmethod
    def _coerce_theta(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(array)):
            raise ValueError("parameters must be finite")
        return readonly_array(array)

    @model_validator(mode="after")
    def _check_size(self) -> "ModelParams":
        if self.patch_size % 2 != 1:
            raise ValueError(f"patch_size must be odd, got {self.patch_size}")
        expected = parameter_count(self.patch_size, self.hidden_width)
        if self.theta.shape[0] != expected:
            raise ValueError(f"theta has {self.theta.shape[0]} entries, expected {expected}")
        return self

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        return cls(
            theta=np.zeros(parameter_count(config.patch_size, config.hidden_width)),
            patch_size=config.patch_size,
            hidden_width=config.hidden_width,
            stride=config.stride,
        )

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        """Small random weights and a classification bias set to the prior."""
        p2, hidden = config.patch_size ** 2, config.hidden_width
        w1 = rng.normal(0.0, config.init_scale, (p2, hidden))
        b1 = np.zeros(hidden)
        w2 = rng.normal(0.0, config.init_scale, (hidden, OUTPUT_UNITS))
        b2 = np.array([0.0, 0.0, math.log(config.prior_prob / (1.0 - config.prior_prob))])
        return cls(
            theta=np.concatenate([w1.ravel(), b1, w2.ravel(), b2]),
            patch_size=config.patch_size,
            hidden_width=config.hidden_width,
            stride=config.stride,
        )

    def with_theta(self, theta: np.ndarray) -> "ModelParams":
        return ModelParams(
            theta=theta,
            patch_size=self.patch_size,
            hidden_width=self.hidden_width,
            stride=self.stride,
        )

    def unpack(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Views (W1, b1, W2, b2) into theta."""
        p2, hidden = self.patch_size ** 2, self.hidden_width
        sizes = np.cumsum([p2 * hidden, hidden, hidden * OUTPUT_UNITS])
        w1, b1, w2, b2 = np.split(self.theta, sizes)
        return w1.reshape(p2, hidden), b1, w2.reshape(hidden, OUTPUT_UNITS), b2

    def __len__(self) -> int:
        return int(self.theta.shape[0])


class ForwardCache(ArrayModel):
    """Everything backward() needs to differentiate one forward pass."""

    params: ModelParams
    grid: AnchorGridMeta
    patches: np.ndarray
    pre_activations: np.ndarray
    hidden: np.ndarray
    outputs: np.ndarray
    scores: np.ndarray

    @property
    def anchor_count(self) -> int:
        return int(self.outputs.shape[0])


def extract_patches(field: np.ndarray, grid: AnchorGridMeta, patch_size: int) -> np.ndarray:
    """
    Zero-padded P x P patches centred on every anchor.

    Returns:
        (M, P*P) array in anchor order
    """
    half = patch_size // 2
    # extra stride on the far sides covers anchor centres beyond a ragged edge
    padded = np.pad(field, ((half, half + grid.stride), (half, half + grid.stride)))
    windows = sliding_window_view(padded, (patch_size, patch_size))
    centers = grid.centers()
    cols = np.floor(centers[:, 0]).astype(np.int64)
    rows = np.floor(centers[:, 1]).astype(np.int64)
    return windows[rows, cols].reshape(grid.anchor_count, patch_size * patch_size)


def forward(params: ModelParams, scene_field: np.ndarray) -> Tuple[ProposalSet, ForwardCache]:
    """
    Generate one proposal per anchor.

    Args:
        params: Network parameters
        scene_field: (H, W) scalar field

    Returns:
        Proposals in anchor order and the cache for backward()
    """
    field = np.asarray(scene_field, dtype=np.float64)
    if field.ndim != 2:
        raise ShapeMismatchError(f"field must be two-dimensional, got shape {field.shape}")
    if not np.all(np.isfinite(field)):
        bad = np.argwhere(~np.isfinite(field))
        raise NonFiniteInputError(
            f"field contains {len(bad)} non-finite values; first at (row, col)={tuple(int(v) for v in bad[0])}"
        )
    height, width = field.shape
    if height < params.patch_size or width < params.patch_size:
        raise ContractViolation(
            f"field {height}x{width} is smaller than patch size {params.patch_size}"
        )

    grid = AnchorGridMeta.for_field(height, width, params.stride)
    w1, b1, w2, b2 = params.unpack()
    patches = extract_patches(field, grid, params.patch_size)
    pre = patches @ w1 + b1
    hidden = np.tanh(pre)
    outputs = hidden @ w2 + b2
    scores = expit(outputs[:, 2])
    positions = grid.centers() + outputs[:, :2]

    proposals = ProposalSet(positions=positions, scores=scores, grid=grid)
    cache = ForwardCache(
        params=params,
        grid=grid,
        patches=patches,
        pre_activations=pre,
        hidden=hidden,
        outputs=outputs,
        scores=scores,
    )
    return proposals, cache


def backward(cache: ForwardCache, grad_positions: np.ndarray, grad_scores: np.ndarray) -> np.ndarray:
    """
    Reverse-mode gradient of a scalar loss with respect to theta.

    Args:
        cache: Cache from the matching forward() call
        grad_positions: (M, 2) dL/dx_hat, dL/dy_hat per anchor
        grad_scores: (M,) dL/dc_hat per anchor

    Returns:
        Flat gradient aligned with params.theta
    """
    grad_positions = np.asarray(grad_positions, dtype=np.float64)
    grad_scores = np.asarray(grad_scores, dtype=np.float64)
    count = cache.anchor_count
    if grad_positions.shape != (count, 2) or grad_scores.shape != (count,):
        raise ShapeMismatchError(
            f"gradients {grad_positions.shape} / {grad_scores.shape} do not match "
            f"{count} anchors in the forward cache"
        )

    _, _, w2, _ = cache.params.unpack()
    scores = cache.scores
    grad_logit = grad_scores * scores * (1.0 - scores)
    grad_out = np.column_stack([grad_positions, grad_logit])

    grad_w2 = cache.hidden.T @ grad_out
    grad_b2 = grad_out.sum(axis=0)
    grad_hidden = grad_out @ w2.T
    grad_pre = grad_hidden * (1.0 - cache.hidden ** 2)
    grad_w1 = cache.patches.T @ grad_pre
    grad_b1 = grad_pre.sum(axis=0)
    return np.concatenate([grad_w1.ravel(), grad_b1, grad_w2.ravel(), grad_b2])
