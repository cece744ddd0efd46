"""
Geometric primitives over points and point sets.
Distances, grid cell lookups and the crop / flip transforms used by augmentation.
"""

import math
from typing import Tuple

import numpy as np
from scipy.spatial.distance import cdist

from app.models import AnchorGridMeta, Point2D, PointSet


def euclidean_distance(a: Point2D, b: Point2D) -> float:
    """
    Euclidean distance between two points.

    Args:
        a: First point
        b: Second point

    Returns:
        sqrt((a.x - b.x)^2 + (a.y - b.y)^2)
    """
    return math.hypot(a.x - b.x, a.y - b.y)


def pairwise_distances(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """(N, M) matrix of Euclidean distances between two (., 2) coordinate arrays."""
    first = np.asarray(first, dtype=np.float64).reshape(-1, 2)
    second = np.asarray(second, dtype=np.float64).reshape(-1, 2)
    if first.shape[0] == 0 or second.shape[0] == 0:
        return np.zeros((first.shape[0], second.shape[0]))
    return cdist(first, second)


def anchor_index_at(grid: AnchorGridMeta, point: Point2D) -> int:
    """Index of the anchor whose cell contains a position."""
    row, col = grid.cell_of(point.x, point.y)
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise ValueError(f"point ({point.x}, {point.y}) lies outside the anchor grid")
    return grid.index_of(row, col)


def flip_points_horizontal(points: PointSet, width: int) -> PointSet:
    """Mirror points for a field flipped left-right (pixel u maps to width - 1 - u)."""
    coords = np.array(points.coords)
    coords[:, 0] = (width - 1) - coords[:, 0]
    return PointSet(coords=coords)


def crop_points(points: PointSet, top: int, left: int, height: int, width: int) -> Tuple[PointSet, np.ndarray]:
    """
    Restrict points to a crop window and shift them into crop coordinates.

    Args:
        points: Points in field coordinates
        top: First row of the window
        left: First column of the window
        height: Window height
        width: Window width

    Returns:
        Points inside the window in window coordinates, and the boolean keep mask
    """
    coords = points.coords
    shifted = coords - np.array([left, top], dtype=np.float64)
    keep = (
        (shifted[:, 0] >= 0) & (shifted[:, 0] < width)
        & (shifted[:, 1] >= 0) & (shifted[:, 1] < height)
    )
    return PointSet(coords=shifted[keep]), keep
