"""
Configuration management for the Consistent-Point toolkit.
Process settings come from environment variables via Pydantic Settings;
algorithm settings are validated Pydantic models loaded from JSON files.
"""

import math
from pathlib import Path
from typing import List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from app.errors import ConfigError


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    # Output
    output_root: str = Field(
        default="runs",
        description="Default root directory for run outputs"
    )

    # Logging
    log_level: str = Field(
        default="INFO",
        description="Logging level"
    )
    log_file: Optional[str] = Field(
        default=None,
        description="Optional process-wide log file"
    )

    # Reproducibility
    default_seed: int = Field(
        default=0,
        description="Seed used when a config file does not set one"
    )

    class Config:
        env_prefix = "CPOINT_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False


# Global settings instance
settings = Settings()


class SynthConfig(BaseModel):
    """Synthetic crowd scene generator settings."""

    field_size: int = Field(default=96, ge=8, description="Square field side in pixels")
    n_scenes: int = Field(default=200, ge=1, description="Labeled plus unlabeled scene count")
    heads_per_scene: Tuple[int, int] = (4, 14)
    cluster_count: Tuple[int, int] = (1, 3)
    cluster_spread: float = Field(default=10.0, gt=0)
    blob_sigma: float = Field(default=2.0, gt=0)
    amplitude_range: Tuple[float, float] = (0.8, 1.2)
    ambiguous_fraction: float = Field(default=0.2, ge=0, le=1)
    ambiguous_amplitude_scale: float = Field(default=0.4, gt=0, lt=1)
    noise_std: float = Field(default=0.05, ge=0)
    seed: int = Field(default=42, ge=0, lt=2**64)
    labeled_ratio: float = Field(default=0.1, gt=0, le=1)
    holdout_fraction: float = Field(default=0.2, gt=0, le=1)

    @field_validator("heads_per_scene", "cluster_count")
    @classmethod
    def _check_count_range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        low, high = value
        if low < 0 or high < low:
            raise ValueError(f"range must satisfy 0 <= min <= max, got {value}")
        return value

    @field_validator("amplitude_range")
    @classmethod
    def _check_amplitudes(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        a_min, a_max = value
        if a_min <= 0 or a_max < a_min:
            raise ValueError(f"amplitude range must satisfy 0 < a_min <= a_max, got {value}")
        return value

    @model_validator(mode="after")
    def _check_clusters(self) -> "SynthConfig":
        if self.heads_per_scene[1] > 0 and self.cluster_count[1] < 1:
            raise ValueError("cluster_count max must be >= 1 when scenes contain heads")
        return self


class ModelConfig(BaseModel):
    """Proposal network hyperparameters."""

    patch_size: int = Field(default=9, ge=1)
    hidden_width: int = Field(default=32, ge=1)
    stride: int = Field(default=4, ge=1)
    init_scale: float = Field(default=0.1, ge=0)
    prior_prob: float = Field(default=0.05, gt=0, lt=1)

    @field_validator("patch_size")
    @classmethod
    def _check_odd(cls, value: int) -> int:
        if value % 2 != 1:
            raise ValueError(f"patch_size must be odd, got {value}")
        return value


class PAConfig(BaseModel):
    """Position Aggregation settings."""

    k_aux: int = Field(default=4, ge=0, description="Number of auxiliary points K")
    include_self: bool = Field(default=True, description="The pseudo-point always joins the mean")

    @field_validator("k_aux")
    @classmethod
    def _check_k_aux(cls, value: int) -> int:
        root = math.isqrt(value)
        if root * root != value or root % 2 != 0:
            raise ValueError(f"k_aux must be an even perfect square (0, 4, 16, 36, ...), got {value}")
        return value

    @field_validator("include_self")
    @classmethod
    def _check_include_self(cls, value: bool) -> bool:
        if not value:
            raise ValueError("include_self is fixed to true")
        return value


class OptimizerConfig(BaseModel):
    """Adam optimizer settings."""

    learning_rate: float = Field(default=1e-3, gt=0)
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)


class TrainConfig(BaseModel):
    """Mean-teacher training settings."""

    lam: float = Field(default=0.1, ge=0, description="Unlabeled loss weight")
    lambda1: float = Field(default=0.5, ge=0, description="Negative-class weight")
    lambda2: float = Field(default=2e-4, ge=0, description="Localization loss weight")
    pa: PAConfig = Field(default_factory=PAConfig)
    iuc: bool = True
    weight_loc_loss: bool = False
    ema_decay: float = Field(default=0.99, ge=0, le=1)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    crop_size: int = Field(default=64, ge=1)
    batch_labeled: int = Field(default=2, ge=1)
    batch_unlabeled: int = Field(default=2, ge=0)
    steps: int = Field(default=2000, ge=0)
    warmup_steps: int = Field(default=100, ge=0)
    flip_prob: float = Field(default=0.5, ge=0, le=1)
    scale_range: Tuple[float, float] = (1.0, 1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    score_weight: float = Field(default=0.05, ge=0, description="Cost-matrix score weight mu")
    pseudo_threshold: float = Field(default=0.5, ge=0.5, le=1)
    score_threshold: float = Field(default=0.5, ge=0, le=1)
    eval_every: int = Field(default=250, ge=1)
    eval_sigmas: List[float] = Field(default_factory=lambda: [4.0, 8.0])

    @field_validator("scale_range")
    @classmethod
    def _check_scale_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if low <= 0 or high < low:
            raise ValueError(f"scale_range must satisfy 0 < low <= high, got {value}")
        return value

    @field_validator("eval_sigmas")
    @classmethod
    def _check_sigmas(cls, value: List[float]) -> List[float]:
        if not value or any(s <= 0 for s in value):
            raise ValueError("eval_sigmas must be a non-empty list of positive distances")
        return value


ConfigT = TypeVar("ConfigT", bound=BaseModel)


def load_config(path: Optional[str], model_cls: Type[ConfigT]) -> ConfigT:
    """
    Load and validate a JSON config file.

    Args:
        path: JSON file path, or None for defaults
        model_cls: Pydantic model to validate against

    Returns:
        Validated config instance
    """
    if path is None:
        return model_cls()
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        return model_cls.model_validate_json(config_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(format_validation_error(e, config_path.name)) from e


def apply_overrides(config: ConfigT, **overrides) -> ConfigT:
    """Apply non-None override values and re-validate."""
    update = {k: v for k, v in overrides.items() if v is not None}
    if not update:
        return config
    data = config.model_dump()
    for key, value in update.items():
        target = data
        *parents, leaf = key.split(".")
        for parent in parents:
            target = target[parent]
        target[leaf] = value
    try:
        return type(config).model_validate(data)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e, "overrides")) from e


def format_validation_error(error: ValidationError, source: str) -> str:
    """Render pydantic errors as one line per offending field."""
    lines = [f"Invalid configuration in {source}:"]
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"  {location}: {item['msg']}")
    return "\n".join(lines)
