"""
Unit tests for net module.
"""

import pytest
import numpy as np
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))


def small_config(**kwargs):
    from app.config import ModelConfig

    values = {"patch_size": 5, "hidden_width": 6, "stride": 4, "init_scale": 0.3}
    values.update(kwargs)
    return ModelConfig(**values)


class TestModelParams:
    """Tests for the parameter vector."""

    def test_parameter_count(self):
        """Test P^2 H + H + 3H + 3."""
        from net.proposal_net import ModelParams, parameter_count

        assert parameter_count(9, 32) == 81 * 32 + 32 + 96 + 3
        assert len(ModelParams.zeros(small_config())) == parameter_count(5, 6)

    def test_prior_bias(self):
        """Test the classification bias starts at the prior logit."""
        from net.proposal_net import ModelParams

        params = ModelParams.initialize(small_config(prior_prob=0.05), np.random.default_rng(0))
        _, _, _, b2 = params.unpack()
        assert b2[2] == pytest.approx(np.log(0.05 / 0.95))
        assert b2[:2].tolist() == [0.0, 0.0]

    def test_even_patch_rejected(self):
        """Test patch size must be odd."""
        from app.config import ModelConfig

        with pytest.raises(ValueError):
            ModelConfig(patch_size=4)

    def test_non_finite_theta_rejected(self):
        """Test parameters must be finite."""
        from net.proposal_net import ModelParams

        params = ModelParams.zeros(small_config())
        theta = np.array(params.theta)
        theta[0] = np.inf
        with pytest.raises(ValueError):
            params.with_theta(theta)


class TestForward:
    """Tests for the proposal network forward pass."""

    def test_zero_params_give_anchor_centers(self):
        """Test zero weights produce anchor centers and score 0.5."""
        from net.proposal_net import ModelParams, forward

        params = ModelParams.zeros(small_config())
        field = np.random.default_rng(1).normal(size=(20, 24))
        proposals, _ = forward(params, field)

        assert np.array_equal(proposals.positions, proposals.grid.centers())
        assert np.all(proposals.scores == 0.5)

    def test_proposal_count(self):
        """Test a 64x64 field with stride 4 yields 256 proposals."""
        from net.proposal_net import ModelParams, forward

        proposals, _ = forward(ModelParams.zeros(small_config()), np.zeros((64, 64)))
        assert len(proposals) == 256

    def test_forward_is_pure(self):
        """Test the same inputs give identical outputs."""
        from net.proposal_net import ModelParams, forward

        params = ModelParams.initialize(small_config(), np.random.default_rng(2))
        field = np.random.default_rng(3).normal(size=(16, 16))
        first, _ = forward(params, field)
        second, _ = forward(params, field)
        assert first == second

    def test_proposal_depends_only_on_its_patch(self):
        """Test rewriting the field outside an anchor's patch leaves that proposal unchanged."""
        from net.proposal_net import ModelParams, forward

        config = small_config()
        params = ModelParams.initialize(config, np.random.default_rng(4))
        rng = np.random.default_rng(5)
        field = rng.normal(size=(20, 24))
        proposals, _ = forward(params, field)
        half = config.patch_size // 2

        for anchor in (0, 7, len(proposals) - 1):
            x, y = proposals.grid.centers()[anchor]
            row, col = int(np.floor(y)), int(np.floor(x))
            outside = np.ones(field.shape, dtype=bool)
            outside[max(row - half, 0):row + half + 1, max(col - half, 0):col + half + 1] = False
            edited = np.where(outside, rng.normal(size=field.shape) * 10, field)
            changed, _ = forward(params, edited)
            assert np.array_equal(changed.positions[anchor], proposals.positions[anchor])
            assert changed.scores[anchor] == proposals.scores[anchor]

    def test_scores_strictly_inside_unit_interval(self):
        """Test classification scores never reach 0 or 1."""
        from net.proposal_net import ModelParams, forward

        for seed in range(5):
            params = ModelParams.initialize(small_config(), np.random.default_rng(seed))
            proposals, _ = forward(params, np.random.default_rng(seed + 10).normal(size=(24, 24)))
            assert np.all((proposals.scores > 0) & (proposals.scores < 1))

    def test_non_finite_field_rejected(self):
        """Test NaN in the field is reported."""
        from app.errors import NonFiniteInputError
        from net.proposal_net import ModelParams, forward

        field = np.zeros((16, 16))
        field[3, 4] = np.nan
        with pytest.raises(NonFiniteInputError):
            forward(ModelParams.zeros(small_config()), field)

    def test_field_smaller_than_patch_rejected(self):
        """Test fields must hold at least one patch."""
        from app.errors import ContractViolation
        from net.proposal_net import ModelParams, forward

        with pytest.raises(ContractViolation):
            forward(ModelParams.zeros(small_config()), np.zeros((3, 3)))

    def test_three_dimensional_field_rejected(self):
        """Test fields must be 2D."""
        from app.errors import ShapeMismatchError
        from net.proposal_net import ModelParams, forward

        with pytest.raises(ShapeMismatchError):
            forward(ModelParams.zeros(small_config()), np.zeros((8, 8, 3)))


class TestBackward:
    """Tests for the manual reverse pass."""

    def test_zero_output_gradients(self):
        """Test zero upstream gradients give a zero parameter gradient."""
        from net.proposal_net import ModelParams, backward, forward

        params = ModelParams.initialize(small_config(), np.random.default_rng(0))
        _, cache = forward(params, np.random.default_rng(1).normal(size=(16, 16)))
        grad = backward(cache, np.zeros((cache.anchor_count, 2)), np.zeros(cache.anchor_count))
        assert not np.any(grad)

    def test_sigmoid_slope_at_zero(self):
        """Test d c / d logit = 0.25 at zero parameters."""
        from net.proposal_net import ModelParams, backward, forward

        params = ModelParams.zeros(small_config())
        _, cache = forward(params, np.zeros((16, 16)))
        grad_scores = np.zeros(cache.anchor_count)
        grad_scores[3] = 1.0
        grad = backward(cache, np.zeros((cache.anchor_count, 2)), grad_scores)

        _, _, _, b2 = params.with_theta(grad).unpack()
        assert b2[2] == 0.25

    def test_matches_finite_differences(self):
        """Test the parameter gradient against central differences over several seeds."""
        from net.gradcheck import max_relative_error, numerical_gradient
        from net.proposal_net import ModelParams, backward, forward

        config = small_config(patch_size=3, hidden_width=4)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            params = ModelParams.initialize(config, rng)
            field = rng.normal(size=(12, 12))
            _, cache = forward(params, field)
            up_pos = rng.normal(size=(cache.anchor_count, 2))
            up_score = rng.normal(size=cache.anchor_count)

            def scalar(theta):
                proposals, _ = forward(params.with_theta(theta), field)
                return float(np.sum(up_pos * proposals.positions) + np.sum(up_score * proposals.scores))

            analytic = backward(cache, up_pos, up_score)
            numeric = numerical_gradient(scalar, params.theta, step=1e-4)
            assert max_relative_error(analytic, numeric) < 1e-4

    def test_gradient_shape_checked(self):
        """Test misaligned upstream gradients are rejected."""
        from app.errors import ShapeMismatchError
        from net.proposal_net import ModelParams, backward, forward

        _, cache = forward(ModelParams.zeros(small_config()), np.zeros((16, 16)))
        with pytest.raises(ShapeMismatchError):
            backward(cache, np.zeros((3, 2)), np.zeros(3))


class TestParamCheckpoint:
    """Tests for the parameter checkpoint codec."""

    def test_save_and_load(self, tmp_path):
        """Test a saved checkpoint loads bit-identically."""
        from net.checkpoint import load_params, save_params
        from net.proposal_net import ModelParams

        params = ModelParams.initialize(small_config(), np.random.default_rng(4))
        path = tmp_path / "model.params"
        save_params(params, path)
        assert load_params(path) == params

    def test_corruption_detected(self, tmp_path):
        """Test a flipped byte fails the checksum."""
        from app.errors import CheckpointError
        from net.checkpoint import encode_params, load_params
        from net.proposal_net import ModelParams

        data = bytearray(encode_params(ModelParams.zeros(small_config())))
        data[30] ^= 0xFF
        path = tmp_path / "bad.params"
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            load_params(path)

    def test_version_mismatch(self, tmp_path):
        """Test an unknown format version is reported as such."""
        import struct
        from app.errors import FormatVersionError
        from net.checkpoint import encode_params, load_params
        from net.proposal_net import ModelParams

        data = bytearray(encode_params(ModelParams.zeros(small_config())))
        struct.pack_into("<H", data, 4, 99)
        path = tmp_path / "future.params"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatVersionError):
            load_params(path)

    def test_missing_file(self, tmp_path):
        """Test a missing checkpoint is an I/O error."""
        from app.errors import ArtifactIOError
        from net.checkpoint import load_params

        with pytest.raises(ArtifactIOError):
            load_params(tmp_path / "absent.params")
