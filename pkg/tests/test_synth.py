"""
Unit tests for synth module (scene generation and dataset storage).
"""

import pytest
import numpy as np
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))


def tiny_config(**kwargs):
    from app.config import SynthConfig

    values = {"field_size": 32, "n_scenes": 10, "heads_per_scene": (2, 6), "seed": 42}
    values.update(kwargs)
    return SynthConfig(**values)


class TestRenderField:
    """Tests for blob rendering."""

    def test_isolated_blob_peak(self):
        """Test one unit blob peaks at its pixel with value 1."""
        from synth.generator import render_field

        field = render_field(np.array([[32.0, 32.0]]), np.array([1.0]), 64, 64, blob_sigma=2.0)
        row, col = np.unravel_index(np.argmax(field), field.shape)
        assert (row, col) == (32, 32)
        assert field[32, 32] == pytest.approx(1.0, abs=1e-6)

    def test_empty_scene_is_zero(self):
        """Test no heads render an all-zero field."""
        from synth.generator import render_field

        field = render_field(np.zeros((0, 2)), np.zeros(0), 16, 16, blob_sigma=2.0)
        assert not np.any(field)


class TestSceneGenerator:
    """Tests for dataset generation."""

    def test_split_sizes(self):
        """Test 10 scenes at ratio 0.1 give 1 labeled and 9 unlabeled plus holdout."""
        from synth.generator import generate_dataset

        labeled, unlabeled, holdout = generate_dataset(tiny_config(labeled_ratio=0.1))
        assert len(labeled) == 1
        assert len(unlabeled) == 9
        assert len(holdout) == 2

    def test_labels_hidden_for_unlabeled(self):
        """Test training cannot see unlabeled ground truth."""
        from synth.generator import generate_dataset

        labeled, unlabeled, holdout = generate_dataset(tiny_config())
        assert all(scene.labels is not None for scene in labeled + holdout)
        assert all(scene.labels is None for scene in unlabeled)
        assert all(scene.gt_points is not None for scene in unlabeled)

    def test_points_inside_field(self):
        """Test all heads lie within the field."""
        from synth.generator import generate_dataset

        labeled, unlabeled, holdout = generate_dataset(tiny_config(cluster_spread=30.0))
        for scene in labeled + unlabeled + holdout:
            coords = scene.gt_points.coords
            assert np.all((coords >= 0) & (coords < 32))
            assert scene.field.dtype == np.float32

    def test_every_head_is_visible_without_noise(self):
        """Test each head lifts its nearest pixel by at least a_min * scale * exp(-0.5)."""
        from synth.generator import generate_dataset

        config = tiny_config(noise_std=0.0, ambiguous_fraction=0.5, amplitude_range=(0.8, 1.2))
        floor = 0.8 * config.ambiguous_amplitude_scale * np.exp(-0.5)
        labeled, unlabeled, holdout = generate_dataset(config)
        for scene in labeled + unlabeled + holdout:
            cols = np.clip(np.rint(scene.gt_points.coords[:, 0]).astype(int), 0, scene.width - 1)
            rows = np.clip(np.rint(scene.gt_points.coords[:, 1]).astype(int), 0, scene.height - 1)
            assert np.all(scene.field[rows, cols] >= floor * (1 - 1e-6))

    def test_same_seed_same_bytes(self):
        """Test a fixed seed reproduces the serialized dataset exactly."""
        from synth.generator import generate_dataset
        from synth.storage import encode_dataset

        config = tiny_config()
        first = encode_dataset(sum(generate_dataset(config), []), config)[0]
        second = encode_dataset(sum(generate_dataset(config), []), config)[0]
        assert first == second

    def test_zero_labeled_ratio_rejected(self):
        """Test a dataset without labeled scenes is a configuration error."""
        with pytest.raises(ValueError):
            tiny_config(labeled_ratio=0.0)

    def test_degenerate_density_rejected(self):
        """Test more heads than the field can hold."""
        from app.errors import ConfigError
        from synth.generator import SceneGenerator

        with pytest.raises(ConfigError):
            SceneGenerator(tiny_config(field_size=8, heads_per_scene=(1, 40)))

    def test_ambiguous_heads_are_fainter(self):
        """Test ambiguous amplitude scale must be below one."""
        with pytest.raises(ValueError):
            tiny_config(ambiguous_amplitude_scale=1.0)


class TestDatasetStorage:
    """Tests for the binary dataset codec."""

    def test_empty_file(self, tmp_path):
        """Test zero scenes make a valid, loadable file."""
        from synth.storage import load_dataset, save_dataset

        path = tmp_path / "empty.cpds"
        assert save_dataset([], path) == []
        assert load_dataset(path) == []

    def test_single_scene_round_trip(self, tmp_path):
        """Test a labeled scene loads back equal."""
        from synth.generator import generate_dataset
        from synth.storage import load_dataset, save_dataset

        labeled, _, _ = generate_dataset(tiny_config())
        path = tmp_path / "one.cpds"
        save_dataset(labeled[:1], path)
        assert load_dataset(path) == labeled[:1]

    def test_truncated_record(self, tmp_path):
        """Test truncation raises a located parse error."""
        from app.errors import DatasetFormatError
        from synth.generator import generate_dataset
        from synth.storage import load_dataset, save_dataset

        labeled, unlabeled, _ = generate_dataset(tiny_config())
        path = tmp_path / "cut.cpds"
        save_dataset(labeled + unlabeled[:1], path)
        path.write_bytes(path.read_bytes()[:-50])

        with pytest.raises(DatasetFormatError) as info:
            load_dataset(path)
        assert info.value.record == 1

    def test_non_finite_coordinate(self, tmp_path):
        """Test a NaN coordinate is a format error located at the point data."""
        import struct
        from app.errors import DatasetFormatError
        from synth.generator import generate_dataset
        from synth.storage import encode_dataset, load_dataset

        labeled, _, _ = generate_dataset(tiny_config())
        scene = labeled[0]
        data, offsets = encode_dataset([scene])
        points_at = offsets[0] + 4 + 2 + len(scene.scene_id.encode()) + 9 + 4 * scene.height * scene.width + 5
        corrupted = bytearray(data)
        struct.pack_into("<d", corrupted, points_at, float("nan"))
        path = tmp_path / "nan.cpds"
        path.write_bytes(bytes(corrupted))

        with pytest.raises(DatasetFormatError) as info:
            load_dataset(path)
        assert info.value.record == 0
        assert info.value.offset == points_at

    def test_version_mismatch(self, tmp_path):
        """Test an unknown dataset version is rejected explicitly."""
        import struct
        from app.errors import FormatVersionError
        from synth.storage import encode_dataset, load_dataset

        data = bytearray(encode_dataset([])[0])
        struct.pack_into("<H", data, 4, 7)
        path = tmp_path / "future.cpds"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatVersionError):
            load_dataset(path)

    def test_directory_round_trip(self, tmp_path):
        """Test all splits and the index survive a save/load cycle."""
        from synth.generator import generate_dataset
        from synth.storage import SyntheticDataset, load_dataset_dir, save_dataset_dir

        config = tiny_config()
        labeled, unlabeled, holdout = generate_dataset(config)
        artifacts = save_dataset_dir(
            SyntheticDataset(labeled=labeled, unlabeled=unlabeled, holdout=holdout, config=config), tmp_path
        )
        loaded = load_dataset_dir(tmp_path)

        assert set(artifacts) == {"labeled", "unlabeled", "holdout", "index"}
        assert loaded.labeled == labeled
        assert loaded.holdout == holdout
        assert loaded.config == config

    def test_missing_directory(self, tmp_path):
        """Test a missing dataset names the expected path."""
        from app.errors import ArtifactIOError
        from synth.storage import load_dataset_dir

        with pytest.raises(ArtifactIOError, match="index.json"):
            load_dataset_dir(tmp_path / "nowhere")

    def test_malformed_index(self, tmp_path):
        """Test an index without split entries is a format error."""
        import json
        from app.errors import DatasetFormatError
        from synth.storage import FORMAT_VERSION, load_dataset_dir

        (tmp_path / "index.json").write_text(json.dumps({"format_version": FORMAT_VERSION, "splits": {}}))
        with pytest.raises(DatasetFormatError):
            load_dataset_dir(tmp_path)
