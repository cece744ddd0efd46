"""
Unit tests for consistency module (pseudo-points, aggregation, calibration).
"""

import pytest
import numpy as np
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))


def teacher_output(scores, positions=None, side=20, stride=4):
    from app.models import AnchorGridMeta, ProposalSet

    grid = AnchorGridMeta.for_field(side, side, stride)
    positions = grid.centers() if positions is None else positions
    return ProposalSet(positions=positions, scores=scores, grid=grid)


class TestExtractPseudoPoints:
    """Tests for positive proposal extraction."""

    def test_no_positives(self):
        """Test all scores below 0.5 give an empty set."""
        from consistency.pseudo_points import extract_pseudo_points

        indices, scores = extract_pseudo_points(teacher_output(np.full(25, 0.4)))
        assert indices.size == 0
        assert scores.size == 0

    def test_threshold_is_inclusive(self):
        """Test a score of exactly 0.5 counts as positive."""
        from app.models import AnchorGridMeta, ProposalSet
        from consistency.pseudo_points import extract_pseudo_points

        grid = AnchorGridMeta.for_field(4, 12, 4)
        proposals = ProposalSet(positions=grid.centers(), scores=[0.3, 0.5, 0.9], grid=grid)
        indices, scores = extract_pseudo_points(proposals)
        assert indices.tolist() == [1, 2]
        assert scores.tolist() == [0.5, 0.9]

    def test_untrained_teacher_saturates(self):
        """Test every anchor is a pseudo-point when all scores are 0.5."""
        from consistency.pseudo_points import extract_pseudo_points

        indices, _ = extract_pseudo_points(teacher_output(np.full(25, 0.5)))
        assert indices.size == 25


class TestAuxiliaryOffsets:
    """Tests for the auxiliary neighbourhood layout."""

    def test_four_is_the_cross(self):
        """Test K = 4 uses the edge-adjacent cells."""
        from consistency.pseudo_points import auxiliary_offsets

        assert sorted(auxiliary_offsets(4)) == [(-1, 0), (0, -1), (0, 1), (1, 0)]

    def test_sixteen_is_symmetric(self):
        """Test K = 16 gives distinct offsets closed under 90 degree rotation."""
        from consistency.pseudo_points import auxiliary_offsets

        offsets = auxiliary_offsets(16)
        assert len(set(offsets)) == 16
        assert (0, 0) not in offsets
        assert {(-dr, dc) for dc, dr in offsets} == set(offsets)

    def test_invalid_count_rejected(self):
        """Test K must be a whole number of rotation orbits."""
        from app.config import PAConfig

        with pytest.raises(ValueError):
            PAConfig(k_aux=3)


class TestPositionAggregate:
    """Tests for Position Aggregation."""

    def test_zero_aux_is_identity(self):
        """Test K = 0 returns the regressed position bit-exactly."""
        from app.config import PAConfig
        from consistency.pseudo_points import position_aggregate

        rng = np.random.default_rng(0)
        proposals = teacher_output(np.full(25, 0.7), positions=rng.uniform(0, 20, (25, 2)))
        point = position_aggregate(12, proposals, PAConfig(k_aux=0))
        assert point.as_tuple() == tuple(proposals.positions[12].tolist())

    def test_identical_auxiliaries(self):
        """Test aggregating identical positions returns that position."""
        from app.config import PAConfig
        from consistency.pseudo_points import position_aggregate

        positions = np.tile([7.25, 3.5], (25, 1))
        point = position_aggregate(12, teacher_output(np.full(25, 0.7), positions), PAConfig(k_aux=4))
        assert point.as_tuple() == (7.25, 3.5)

    def test_symmetric_cross(self):
        """Test the mean of a symmetric cross around (10, 10)."""
        from app.config import PAConfig
        from consistency.pseudo_points import position_aggregate

        # 5x5 grid, centre anchor 12, neighbours 7 (up), 11 (left), 13 (right), 17 (down)
        positions = np.zeros((25, 2))
        positions[12] = [10.0, 10.0]
        positions[7] = [10.0, 8.0]
        positions[17] = [10.0, 12.0]
        positions[11] = [8.0, 10.0]
        positions[13] = [12.0, 10.0]
        point = position_aggregate(12, teacher_output(np.full(25, 0.7), positions), PAConfig(k_aux=4))
        assert point.as_tuple() == (10.0, 10.0)

    def test_border_cells_are_dropped(self):
        """Test a corner anchor averages only its in-grid neighbours."""
        from app.config import PAConfig
        from consistency.pseudo_points import aggregate_positions

        positions = np.zeros((25, 2))
        positions[0] = [3.0, 3.0]
        positions[1] = [6.0, 0.0]
        positions[5] = [0.0, 6.0]
        coords, counts = aggregate_positions(np.array([0]), teacher_output(np.full(25, 0.7), positions), PAConfig(k_aux=4))
        assert counts.tolist() == [2]
        assert coords[0].tolist() == [3.0, 3.0]

    def test_inside_convex_hull(self):
        """Test every aggregated point lies in the hull of the positions it averages."""
        from app.config import PAConfig
        from consistency.pseudo_points import aggregate_positions, auxiliary_offsets

        directions = np.stack([np.cos(np.linspace(0, 2 * np.pi, 64, endpoint=False)),
                               np.sin(np.linspace(0, 2 * np.pi, 64, endpoint=False))], axis=1)
        for seed in range(10):
            rng = np.random.default_rng(seed)
            proposals = teacher_output(np.full(25, 0.7), positions=rng.uniform(0, 20, (25, 2)))
            indices = np.arange(25)
            coords, _ = aggregate_positions(indices, proposals, PAConfig(k_aux=16))
            for index, point in zip(indices, coords):
                row, col = divmod(int(index), 5)
                members = [index] + [
                    (row + dr) * 5 + (col + dc)
                    for dc, dr in auxiliary_offsets(16)
                    if 0 <= row + dr < 5 and 0 <= col + dc < 5
                ]
                support = proposals.positions[members] @ directions.T
                assert np.all(directions @ point <= support.max(axis=0) + 1e-9)

    def test_out_of_range_index(self):
        """Test an anchor index outside the grid is rejected."""
        from app.config import PAConfig
        from app.errors import ContractViolation
        from consistency.pseudo_points import position_aggregate

        with pytest.raises(ContractViolation):
            position_aggregate(25, teacher_output(np.full(25, 0.7)), PAConfig(k_aux=4))


class TestIUCWeight:
    """Tests for instance-wise uncertainty calibration."""

    def test_exact_values(self):
        """Test the weight at the bounds and in between."""
        from consistency.pseudo_points import iuc_weight

        assert iuc_weight(0.5) == 0.0
        assert iuc_weight(0.75) == 0.5
        assert iuc_weight(1.0) == 1.0
        assert iuc_weight(0.8) == pytest.approx(0.6)

    def test_outside_domain(self):
        """Test scores below 0.5 are rejected."""
        from app.errors import ContractViolation
        from consistency.pseudo_points import iuc_weight

        with pytest.raises(ContractViolation):
            iuc_weight(0.4)

    def test_array_scores(self):
        """Test an array of scores gives elementwise weights."""
        from consistency.pseudo_points import iuc_weight

        weights = iuc_weight(np.array([0.5, 0.75, 1.0]))
        assert weights.tolist() == [0.0, 0.5, 1.0]

    def test_labeler_uses_the_weight(self):
        """Test calibrated pseudo-labels carry iuc_weight of their scores."""
        from app.config import PAConfig
        from consistency.pseudo_points import build_consistent_labels, iuc_weight

        scores = np.random.default_rng(11).uniform(size=25)
        labels = build_consistent_labels(teacher_output(scores), PAConfig(k_aux=4))
        assert np.array_equal(labels.weights, iuc_weight(labels.source_scores))


class TestBuildConsistentLabels:
    """Tests for the full pseudo-labelling pipeline."""

    def test_no_positives(self):
        """Test an all-negative teacher gives empty labels."""
        from app.config import PAConfig
        from consistency.pseudo_points import build_consistent_labels

        labels = build_consistent_labels(teacher_output(np.full(25, 0.1)), PAConfig(k_aux=4))
        assert len(labels) == 0

    def test_single_positive_without_aggregation(self):
        """Test one positive with K = 0 keeps its position and gets weight 0.8."""
        from app.config import PAConfig
        from consistency.pseudo_points import build_consistent_labels

        scores = np.full(25, 0.1)
        scores[6] = 0.9
        proposals = teacher_output(scores, positions=np.random.default_rng(3).uniform(0, 20, (25, 2)))
        labels = build_consistent_labels(proposals, PAConfig(k_aux=0))

        assert labels.points.coords.tolist() == [proposals.positions[6].tolist()]
        assert labels.weights[0] == pytest.approx(0.8)
        assert labels.source_anchor_indices.tolist() == [6]

    def test_uncalibrated_weights_are_one(self):
        """Test turning calibration off gives unit weights."""
        from app.config import PAConfig
        from consistency.pseudo_points import build_consistent_labels

        scores = np.linspace(0.0, 1.0, 25)
        labels = build_consistent_labels(teacher_output(scores), PAConfig(k_aux=4), calibrate=False)
        assert np.all(labels.weights == 1.0)

    def test_randomized_teachers(self):
        """Test label count and weight range over seeded random teachers."""
        from app.config import PAConfig
        from consistency.pseudo_points import build_consistent_labels

        for seed in range(10):
            rng = np.random.default_rng(seed)
            scores = rng.uniform(size=25)
            labels = build_consistent_labels(
                teacher_output(scores, positions=rng.uniform(0, 20, (25, 2))), PAConfig(k_aux=4)
            )
            assert len(labels) == int(np.sum(scores >= 0.5))
            assert np.all((labels.weights >= 0) & (labels.weights <= 1))
            assert np.all(labels.source_scores >= 0.5)

    def test_zero_aux_identity_over_random_teachers(self):
        """Test K = 0 leaves every pseudo-point position bit-unchanged."""
        from app.config import PAConfig
        from consistency.pseudo_points import build_consistent_labels

        rng = np.random.default_rng(5)
        positions = rng.uniform(0, 20, (25, 2))
        scores = rng.uniform(size=25)
        labels = build_consistent_labels(teacher_output(scores, positions), PAConfig(k_aux=0))
        assert np.array_equal(labels.points.coords, positions[scores >= 0.5])


class TestVarianceProbe:
    """Monte-Carlo tests for variance reduction by averaging."""

    @pytest.mark.parametrize("sigma,k", [(1.0, 1), (1.0, 4), (2.0, 4), (1.0, 16), (2.0, 16)])
    def test_aggregated_variance(self, sigma, k):
        """Test the K-average has variance sigma^2 / K within 5 percent."""
        from consistency.variance import variance_probe

        single, aggregated = variance_probe(sigma, k, trials=100_000, seed=0)
        assert np.allclose(single, sigma ** 2, rtol=0.05)
        assert np.allclose(aggregated, sigma ** 2 / k, rtol=0.05)

    def test_too_few_trials(self):
        """Test the trial floor."""
        from app.errors import ContractViolation
        from consistency.variance import variance_probe

        with pytest.raises(ContractViolation):
            variance_probe(1.0, 4, trials=100, seed=0)


class TestPseudoLabelDrift:
    """Tests for pseudo-label drift diagnostics."""

    def test_identical_sets(self):
        """Test identical sets have zero drift."""
        from app.models import PointSet
        from consistency.drift import pseudo_label_drift

        points = PointSet(coords=[[1.0, 1.0], [5.0, 5.0]])
        report = pseudo_label_drift(points, points)
        assert report.mean_displacement == 0.0
        assert report.count_change == 0
        assert report.matched == 2

    def test_shift_and_new_point(self):
        """Test displacement of matched points and the count change."""
        from app.models import PointSet
        from consistency.drift import pseudo_label_drift

        previous = PointSet(coords=[[0.0, 0.0], [10.0, 0.0]])
        current = PointSet(coords=[[0.0, 3.0], [10.0, 4.0], [50.0, 50.0]])
        report = pseudo_label_drift(previous, current)
        assert report.matched == 2
        assert report.mean_displacement == pytest.approx(3.5)
        assert report.count_change == 1

    def test_empty_previous(self):
        """Test drift from an empty set."""
        from app.models import PointSet
        from consistency.drift import pseudo_label_drift

        report = pseudo_label_drift(PointSet.empty(), PointSet(coords=[[1.0, 2.0]]))
        assert report.matched == 0
        assert report.mean_displacement == 0.0
