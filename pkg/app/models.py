"""
Pydantic data models for the Consistent-Point toolkit.
Defines all data structures shared across packages.
"""

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def readonly_array(array: np.ndarray) -> np.ndarray:
    """Return an owned, read-only copy of an array."""
    owned = np.array(array, copy=True)
    owned.setflags(write=False)
    return owned


class ArrayModel(BaseModel):
    """Immutable model that may hold numpy arrays; equality is elementwise."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    def __eq__(self, other: Any) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        for name in type(self).model_fields:
            mine, theirs = getattr(self, name), getattr(other, name)
            if isinstance(mine, np.ndarray) or isinstance(theirs, np.ndarray):
                if mine is None or theirs is None:
                    return False
                if mine.dtype != theirs.dtype or not np.array_equal(mine, theirs):
                    return False
            elif mine != theirs:
                return False
        return True

    __hash__ = None


# Geometry
class Point2D(BaseModel):
    """A planar position in pixel units, origin at the top-left corner."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float

    @model_validator(mode="after")
    def _check_finite(self) -> "Point2D":
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point must be finite, got ({self.x}, {self.y})")
        return self

    def as_tuple(self) -> Tuple[float, float]:
        return (self.x, self.y)


class PointSet(ArrayModel):
    """Ordered set of points stored as an (N, 2) float64 array of (x, y)."""

    coords: np.ndarray

    @field_validator("coords", mode="before")
    @classmethod
    def _coerce_coords(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.size == 0:
            array = array.reshape(0, 2)
        if array.ndim != 2 or array.shape[1] != 2:
            raise ValueError(f"coords must have shape (N, 2), got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("coords must be finite")
        return readonly_array(array)

    @classmethod
    def empty(cls) -> "PointSet":
        return cls(coords=np.zeros((0, 2)))

    @property
    def points(self) -> List[Point2D]:
        return [Point2D(x=float(x), y=float(y)) for x, y in self.coords]

    def __len__(self) -> int:
        return int(self.coords.shape[0])


class AnchorGridMeta(BaseModel):
    """Anchor grid laid over a field; one anchor per stride x stride cell."""

    model_config = ConfigDict(frozen=True)

    field_height: int = Field(ge=1)
    field_width: int = Field(ge=1)
    stride: int = Field(ge=1)
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_shape(self) -> "AnchorGridMeta":
        expected = (math.ceil(self.field_height / self.stride), math.ceil(self.field_width / self.stride))
        if (self.rows, self.cols) != expected:
            raise ValueError(f"grid shape {(self.rows, self.cols)} does not match field, expected {expected}")
        return self

    @classmethod
    def for_field(cls, height: int, width: int, stride: int) -> "AnchorGridMeta":
        return cls(
            field_height=height,
            field_width=width,
            stride=stride,
            rows=math.ceil(height / stride),
            cols=math.ceil(width / stride),
        )

    @property
    def anchor_count(self) -> int:
        return self.rows * self.cols

    def centers(self) -> np.ndarray:
        """Anchor centers in anchor-index order as an (M, 2) array of (x, y)."""
        rows, cols = np.divmod(np.arange(self.anchor_count), self.cols)
        return np.stack([(cols + 0.5) * self.stride, (rows + 0.5) * self.stride], axis=1)

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        """(row, col) of the cell containing a position."""
        return int(math.floor(y / self.stride)), int(math.floor(x / self.stride))

    def index_of(self, row: int, col: int) -> int:
        return row * self.cols + col

    def row_col(self, index: int) -> Tuple[int, int]:
        return divmod(int(index), self.cols)


class ScoredProposal(BaseModel):
    """One proposal-point: regressed position plus classification score."""

    model_config = ConfigDict(frozen=True)

    position: Point2D
    score: float = Field(ge=0, le=1)
    anchor_index: int = Field(ge=0)


class ProposalSet(ArrayModel):
    """All proposals of one forward pass, one per anchor in anchor order."""

    positions: np.ndarray
    scores: np.ndarray
    grid: AnchorGridMeta

    @field_validator("positions", mode="before")
    @classmethod
    def _coerce_positions(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2 or array.shape[1] != 2:
            raise ValueError(f"positions must have shape (M, 2), got {array.shape}")
        return readonly_array(array)

    @field_validator("scores", mode="before")
    @classmethod
    def _coerce_scores(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 1:
            raise ValueError(f"scores must be one-dimensional, got {array.shape}")
        if np.any(array < 0) or np.any(array > 1):
            raise ValueError("scores must lie in [0, 1]")
        return readonly_array(array)

    @model_validator(mode="after")
    def _check_alignment(self) -> "ProposalSet":
        count = self.grid.anchor_count
        if self.positions.shape[0] != count or self.scores.shape[0] != count:
            raise ValueError(
                f"expected exactly one proposal per anchor ({count}), "
                f"got {self.positions.shape[0]} positions and {self.scores.shape[0]} scores"
            )
        return self

    @property
    def proposals(self) -> List[ScoredProposal]:
        return [
            ScoredProposal(position=Point2D(x=float(x), y=float(y)), score=float(s), anchor_index=j)
            for j, ((x, y), s) in enumerate(zip(self.positions, self.scores))
        ]

    def __len__(self) -> int:
        return int(self.scores.shape[0])


# Matching
class CostMatrix(ArrayModel):
    """Pair-wise target/proposal cost matrix with N <= M."""

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"cost matrix must be two-dimensional, got {array.shape}")
        if array.shape[0] > array.shape[1]:
            raise ValueError(f"cost matrix needs N <= M, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("cost matrix entries must be finite")
        return readonly_array(array)

    @property
    def n_targets(self) -> int:
        return int(self.values.shape[0])

    @property
    def m_proposals(self) -> int:
        return int(self.values.shape[1])


class MatchResult(ArrayModel):
    """One-to-one assignment of targets to proposals."""

    assignment: np.ndarray
    total_cost: float
    positive_set: np.ndarray
    negative_set: np.ndarray
    n_proposals: int = Field(ge=0)

    @field_validator("assignment", "positive_set", "negative_set", mode="before")
    @classmethod
    def _coerce_indices(cls, value: Any) -> np.ndarray:
        return readonly_array(np.asarray(value, dtype=np.int64).reshape(-1))

    @model_validator(mode="after")
    def _check_partition(self) -> "MatchResult":
        if len(np.unique(self.assignment)) != len(self.assignment):
            raise ValueError("assignment must be injective")
        covered = np.concatenate([self.positive_set, self.negative_set])
        if len(self.positive_set) != len(self.assignment) or not np.array_equal(
            np.sort(covered), np.arange(self.n_proposals)
        ):
            raise ValueError("positive and negative sets must partition the proposals")
        return self

    @property
    def n_targets(self) -> int:
        return int(self.assignment.shape[0])

    def as_dict(self) -> Dict[int, int]:
        return {i: int(j) for i, j in enumerate(self.assignment)}


# Scenes
class Scene(ArrayModel):
    """A rendered scalar field plus its head positions."""

    field: np.ndarray
    gt_points: Optional[PointSet] = None
    scene_id: str
    is_labeled: bool
    ambiguous: Optional[np.ndarray] = None

    @field_validator("field", mode="before")
    @classmethod
    def _coerce_field(cls, value: Any) -> np.ndarray:
        array = np.asarray(value, dtype=np.float32)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"field must be a non-empty 2D array, got {array.shape}")
        return readonly_array(array)

    @field_validator("ambiguous", mode="before")
    @classmethod
    def _coerce_ambiguous(cls, value: Any) -> Optional[np.ndarray]:
        if value is None:
            return None
        return readonly_array(np.asarray(value, dtype=bool).reshape(-1))

    @model_validator(mode="after")
    def _check_points(self) -> "Scene":
        if self.is_labeled and self.gt_points is None:
            raise ValueError(f"labeled scene {self.scene_id} has no ground-truth points")
        if self.gt_points is not None and len(self.gt_points):
            xs, ys = self.gt_points.coords[:, 0], self.gt_points.coords[:, 1]
            if np.any(xs < 0) or np.any(xs >= self.width) or np.any(ys < 0) or np.any(ys >= self.height):
                raise ValueError(f"scene {self.scene_id} has points outside the field")
        if self.ambiguous is not None:
            expected = len(self.gt_points) if self.gt_points is not None else 0
            if self.ambiguous.shape[0] != expected:
                raise ValueError("ambiguous mask must align with gt_points")
        return self

    @property
    def height(self) -> int:
        return int(self.field.shape[0])

    @property
    def width(self) -> int:
        return int(self.field.shape[1])

    @property
    def labels(self) -> Optional[PointSet]:
        """Ground truth as seen by training: hidden for unlabeled scenes."""
        return self.gt_points if self.is_labeled else None


# Consistency
class ConsistentPseudoLabels(ArrayModel):
    """Teacher pseudo-points after Position Aggregation, with IUC weights."""

    points: PointSet
    weights: np.ndarray
    source_scores: np.ndarray
    source_anchor_indices: np.ndarray
    aux_counts: np.ndarray
    calibrated: bool = True

    @field_validator("weights", "source_scores", mode="before")
    @classmethod
    def _coerce_floats(cls, value: Any) -> np.ndarray:
        return readonly_array(np.asarray(value, dtype=np.float64).reshape(-1))

    @field_validator("source_anchor_indices", "aux_counts", mode="before")
    @classmethod
    def _coerce_ints(cls, value: Any) -> np.ndarray:
        return readonly_array(np.asarray(value, dtype=np.int64).reshape(-1))

    @model_validator(mode="after")
    def _check_consistency(self) -> "ConsistentPseudoLabels":
        n = len(self.points)
        lengths = {len(self.weights), len(self.source_scores), len(self.source_anchor_indices), len(self.aux_counts)}
        if lengths != {n}:
            raise ValueError("pseudo-label arrays must all have length N^U")
        if np.any(self.source_scores < 0.5) or np.any(self.source_scores > 1):
            raise ValueError("source scores must lie in [0.5, 1]")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ValueError("weights must lie in [0, 1]")
        if self.calibrated and not np.array_equal(self.weights, (self.source_scores - 0.5) / 0.5):
            raise ValueError("calibrated weights must equal (score - 0.5) / 0.5")
        return self

    def __len__(self) -> int:
        return len(self.points)


# Losses
class LossBreakdown(ArrayModel):
    """Loss values and per-anchor gradients for one scene (or a batch summary)."""

    flavor: Literal["labeled", "unlabeled", "batch"]
    l_loc: float
    l_cls: float
    total: float
    grad_positions: np.ndarray
    grad_scores: np.ndarray
    clamp_count: int = 0
    n_targets: int = 0
    param_grad: Optional[np.ndarray] = None

    def with_param_grad(self, param_grad: np.ndarray) -> "LossBreakdown":
        return self.model_copy(update={"param_grad": readonly_array(param_grad)})


class CombinedLoss(ArrayModel):
    """Semi-supervised objective L = L^L + lambda * L^U."""

    total: float
    labeled_total: float
    unlabeled_total: float
    lam: float
    param_grad: Optional[np.ndarray] = None


# Metrics
class LocalizationReport(BaseModel):
    """Precision / recall / F1 at one distance threshold."""

    tp: int = Field(ge=0)
    fp: int = Field(ge=0)
    fn: int = Field(ge=0)
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    threshold: float = Field(gt=0)

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, threshold: float) -> "LocalizationReport":
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return cls(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1, threshold=threshold)


class CountingReport(BaseModel):
    """MAE and root-mean-squared count error over images."""

    mae: float = Field(ge=0)
    mse: float = Field(ge=0)
    n_images: int = Field(ge=1)


class EvaluationReport(BaseModel):
    """Holdout metrics at one training step."""

    step: int
    model: str = "teacher"
    localization: List[LocalizationReport]
    counting: CountingReport


class DriftReport(BaseModel):
    """Change of a pseudo-label set between two teacher snapshots."""

    previous_count: int
    current_count: int
    matched: int
    mean_displacement: float
    count_change: int


# Runs
class LossRow(BaseModel):
    """Per-step training losses."""

    step: int
    total: float
    labeled_total: float
    labeled_loc: float
    labeled_cls: float
    unlabeled_active: bool
    unlabeled_total: Optional[float] = None
    unlabeled_loc: Optional[float] = None
    unlabeled_cls: Optional[float] = None
    n_pseudo: int = 0
    clamp_count: int = 0


class ConsistencyRow(BaseModel):
    """Pseudo-label stability on the probe scene at one evaluation."""

    step: int
    n_pseudo: int
    drift: Optional[DriftReport] = None


class RunReport(BaseModel):
    """Machine-readable record of a training run."""

    config: Dict[str, Any]
    variant: str
    steps_completed: int = 0
    loss_rows: List[LossRow] = []
    metric_rows: List[EvaluationReport] = []
    consistency_rows: List[ConsistencyRow] = []
    checkpoints: Dict[str, str] = {}
    diagnostics: Dict[str, int] = {}
    aborted: bool = False
    abort_reason: Optional[str] = None

    def final_metrics(self) -> Optional[EvaluationReport]:
        return self.metric_rows[-1] if self.metric_rows else None


class RunManifest(BaseModel):
    """Everything needed to reproduce one CLI invocation."""

    command: List[str]
    subcommand: str
    config: Optional[Dict[str, Any]] = None
    format_versions: Dict[str, int]
    seed: Optional[int] = None
    started_at: str
    finished_at: Optional[str] = None
    artifacts: Dict[str, str] = {}
    status: Literal["running", "succeeded", "failed"] = "running"


class SweepRow(BaseModel):
    """One ablation run (or the median over seeds of one value)."""

    axis: str
    value: str
    seed: Optional[int] = None
    status: str = "succeeded"
    mae: Optional[float] = None
    mse: Optional[float] = None
    f1: Dict[str, float] = {}
    run_dir: Optional[str] = None
    error: Optional[str] = None
