"""
Unit tests for geometry module and the shared grid types.
"""

import pytest
import numpy as np
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))


class TestEuclideanDistance:
    """Tests for point distances."""

    def test_identity(self):
        """Test distance of a point to itself."""
        from app.models import Point2D
        from geometry.points import euclidean_distance

        assert euclidean_distance(Point2D(x=0, y=0), Point2D(x=0, y=0)) == 0.0

    def test_three_four_five(self):
        """Test the 3-4-5 triangle, also translated."""
        from app.models import Point2D
        from geometry.points import euclidean_distance

        assert euclidean_distance(Point2D(x=0, y=0), Point2D(x=3, y=4)) == 5.0
        assert euclidean_distance(Point2D(x=1.5, y=2.5), Point2D(x=4.5, y=6.5)) == 5.0

    def test_non_finite_point_rejected(self):
        """Test that points must be finite."""
        from app.models import Point2D

        with pytest.raises(ValueError):
            Point2D(x=float("nan"), y=0.0)

    def test_triangle_inequality(self):
        """Test symmetry and the triangle inequality on random triples."""
        from app.models import Point2D
        from geometry.points import euclidean_distance

        rng = np.random.default_rng(0)
        for a, b, c in rng.uniform(-50, 50, (200, 3, 2)):
            pa, pb, pc = (Point2D(x=p[0], y=p[1]) for p in (a, b, c))
            assert euclidean_distance(pa, pb) == euclidean_distance(pb, pa)
            assert euclidean_distance(pa, pc) <= euclidean_distance(pa, pb) + euclidean_distance(pb, pc) + 1e-12

    def test_pairwise_handles_empty(self):
        """Test pairwise distances with an empty side."""
        from geometry.points import pairwise_distances

        distances = pairwise_distances(np.zeros((0, 2)), np.ones((3, 2)))
        assert distances.shape == (0, 3)


class TestAnchorGrid:
    """Tests for anchor grid arithmetic."""

    def test_grid_shape_rounds_up(self):
        """Test rows and cols use ceil(size / stride)."""
        from app.models import AnchorGridMeta

        grid = AnchorGridMeta.for_field(64, 66, 4)
        assert (grid.rows, grid.cols) == (16, 17)
        assert grid.anchor_count == 16 * 17

    def test_centers_in_anchor_order(self):
        """Test anchor centers are ((c + 0.5) s, (r + 0.5) s) in row-major order."""
        from app.models import AnchorGridMeta

        grid = AnchorGridMeta.for_field(8, 12, 4)
        centers = grid.centers()
        assert centers[0].tolist() == [2.0, 2.0]
        assert centers[1].tolist() == [6.0, 2.0]
        assert centers[grid.cols].tolist() == [2.0, 6.0]

    def test_anchor_index_at(self):
        """Test cell lookup of a position."""
        from app.models import AnchorGridMeta, Point2D
        from geometry.points import anchor_index_at

        grid = AnchorGridMeta.for_field(16, 16, 4)
        assert anchor_index_at(grid, Point2D(x=5.0, y=9.0)) == 2 * 4 + 1

        with pytest.raises(ValueError):
            anchor_index_at(grid, Point2D(x=-1.0, y=0.0))

    @pytest.mark.parametrize("height,width,stride", [(16, 16, 4), (64, 66, 4), (9, 5, 2), (7, 7, 1)])
    def test_center_lookup_round_trip(self, height, width, stride):
        """Test every anchor center maps back to its own anchor index."""
        from app.models import AnchorGridMeta, Point2D
        from geometry.points import anchor_index_at

        grid = AnchorGridMeta.for_field(height, width, stride)
        for index, (x, y) in enumerate(grid.centers()):
            assert anchor_index_at(grid, Point2D(x=x, y=y)) == index
            assert grid.index_of(*grid.row_col(index)) == index


class TestPointTransforms:
    """Tests for crop and flip of point sets."""

    def test_flip_twice_is_identity(self):
        """Test that flipping twice restores the points."""
        from app.models import PointSet
        from geometry.points import flip_points_horizontal

        points = PointSet(coords=[[1.0, 2.0], [7.5, 3.0]])
        once = flip_points_horizontal(points, 10)
        assert once.coords[:, 0].tolist() == [8.0, 1.5]
        assert flip_points_horizontal(once, 10) == points

    def test_crop_shifts_and_filters(self):
        """Test crop keeps only points inside the window, in window coordinates."""
        from app.models import PointSet
        from geometry.points import crop_points

        points = PointSet(coords=[[5.0, 5.0], [20.0, 5.0], [12.0, 14.0]])
        cropped, keep = crop_points(points, top=4, left=4, height=12, width=12)

        assert keep.tolist() == [True, False, True]
        assert cropped.coords.tolist() == [[1.0, 1.0], [8.0, 10.0]]

    def test_point_set_rejects_bad_shape(self):
        """Test PointSet shape validation."""
        from app.models import PointSet

        with pytest.raises(ValueError):
            PointSet(coords=[1.0, 2.0, 3.0])
