"""
Training views: random scale, random crop and horizontal flip.
All randomness is drawn from the caller's generator in a fixed order.
"""

from typing import Optional, Tuple

import numpy as np
from pydantic import Field
from scipy.ndimage import zoom

from app.config import TrainConfig
from app.models import ArrayModel, ConsistentPseudoLabels, PointSet, Scene
from geometry.points import crop_points, flip_points_horizontal


class UnlabeledView(ArrayModel):
    """The clean teacher view and the (possibly flipped) student view of one crop."""

    clean: np.ndarray
    student: np.ndarray
    flipped: bool
    top: int = Field(ge=0)
    left: int = Field(ge=0)

    @property
    def width(self) -> int:
        return int(self.clean.shape[1])


def random_crop_window(height: int, width: int, crop_size: int, rng: np.random.Generator) -> Tuple[int, int, int, int]:
    """(top, left, crop_height, crop_width); the crop never exceeds the field."""
    crop_h, crop_w = min(crop_size, height), min(crop_size, width)
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    return top, left, crop_h, crop_w


def rescale(field: np.ndarray, points: PointSet, scale: float) -> Tuple[np.ndarray, PointSet]:
    """Bilinear rescale of a field and the matching transform of its points."""
    scaled = zoom(np.asarray(field, dtype=np.float64), scale, order=1)
    height, width = field.shape
    new_h, new_w = scaled.shape
    # zoom maps output pixel i to input pixel i * (n_in - 1) / (n_out - 1)
    factors = np.array([
        (new_w - 1) / (width - 1) if width > 1 else 1.0,
        (new_h - 1) / (height - 1) if height > 1 else 1.0,
    ])
    coords = points.coords * factors
    inside = np.all((coords >= 0) & (coords < np.array([new_w, new_h])), axis=1)
    return scaled, PointSet(coords=coords[inside])


def labeled_view(scene: Scene, config: TrainConfig, rng: np.random.Generator) -> Tuple[np.ndarray, PointSet]:
    """
    Augmented copy of a labeled scene.

    Args:
        scene: Labeled scene
        config: Augmentation settings (scale_range, crop_size, flip_prob)
        rng: Generator shared with the rest of the step

    Returns:
        Field and ground-truth points of the view
    """
    field = np.asarray(scene.field, dtype=np.float64)
    points = scene.labels if scene.labels is not None else PointSet.empty()

    low, high = config.scale_range
    if high > low:
        field, points = rescale(field, points, float(rng.uniform(low, high)))
    elif low != 1.0:
        field, points = rescale(field, points, low)

    top, left, crop_h, crop_w = random_crop_window(field.shape[0], field.shape[1], config.crop_size, rng)
    field = field[top:top + crop_h, left:left + crop_w]
    points, _ = crop_points(points, top, left, crop_h, crop_w)

    if rng.random() < config.flip_prob:
        field = field[:, ::-1]
        points = flip_points_horizontal(points, crop_w)
    return np.ascontiguousarray(field), points


def unlabeled_view(scene: Scene, config: TrainConfig, rng: np.random.Generator) -> UnlabeledView:
    """Crop an unlabeled scene; the student copy is flipped with probability flip_prob."""
    field = np.asarray(scene.field, dtype=np.float64)
    top, left, crop_h, crop_w = random_crop_window(field.shape[0], field.shape[1], config.crop_size, rng)
    clean = np.ascontiguousarray(field[top:top + crop_h, left:left + crop_w])
    flipped = bool(rng.random() < config.flip_prob)
    student = np.ascontiguousarray(clean[:, ::-1]) if flipped else clean
    return UnlabeledView(clean=clean, student=student, flipped=flipped, top=top, left=left)


def flip_pseudo_labels(pseudo: ConsistentPseudoLabels, width: int, flipped: Optional[bool] = True) -> ConsistentPseudoLabels:
    """Carry pseudo-labels from the clean view into the flipped student view."""
    if not flipped:
        return pseudo
    return pseudo.model_copy(update={"points": flip_points_horizontal(pseudo.points, width)})
