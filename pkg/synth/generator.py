"""
Synthetic crowd scene generator.
Head positions come from a mixture of Gaussian clusters; each head is rendered
as an isotropic Gaussian blob on a noisy scalar field. A fraction of heads is
rendered fainter to act as ambiguous instances.
"""

from typing import List, Tuple

import numpy as np
from loguru import logger

from app.config import SynthConfig
from app.errors import ConfigError
from app.models import PointSet, Scene


def render_field(
    coords: np.ndarray,
    amplitudes: np.ndarray,
    height: int,
    width: int,
    blob_sigma: float
) -> np.ndarray:
    """
    Render Gaussian blobs on a zero field.

    Args:
        coords: (N, 2) head positions (x, y) in pixels
        amplitudes: (N,) blob peak heights
        height: Field rows
        width: Field columns
        blob_sigma: Blob standard deviation rho in pixels

    Returns:
        (height, width) float64 field
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    if coords.shape[0] == 0:
        return np.zeros((height, width))
    u = np.arange(width, dtype=np.float64)
    v = np.arange(height, dtype=np.float64)
    scale = 2.0 * blob_sigma ** 2
    # separable: exp(-(du^2 + dv^2)/2rho^2) = exp(-dv^2/2rho^2) * exp(-du^2/2rho^2)
    gx = np.exp(-((u[None, :] - coords[:, 0:1]) ** 2) / scale)
    gy = np.exp(-((v[None, :] - coords[:, 1:2]) ** 2) / scale)
    return (gy * np.asarray(amplitudes, dtype=np.float64)[:, None]).T @ gx


class SceneGenerator:
    """Draws reproducible synthetic crowd scenes from a SynthConfig."""

    MAX_RESAMPLE_ROUNDS = 100

    def __init__(self, config: SynthConfig):
        """
        Initialize the generator.

        Args:
            config: Validated generator settings
        """
        capacity = config.field_size ** 2 / 4
        if config.heads_per_scene[1] > capacity:
            raise ConfigError(
                f"heads_per_scene max {config.heads_per_scene[1]} exceeds field capacity "
                f"{int(capacity)} (one head per 4 px^2): degenerate density"
            )
        self.config = config
        self.logger = logger.bind(component="SceneGenerator")

    def split_sizes(self) -> Tuple[int, int, int]:
        """(labeled, unlabeled, holdout) scene counts."""
        cfg = self.config
        n_labeled = min(cfg.n_scenes, max(1, int(round(cfg.labeled_ratio * cfg.n_scenes))))
        n_holdout = max(1, int(round(cfg.holdout_fraction * cfg.n_scenes)))
        return n_labeled, cfg.n_scenes - n_labeled, n_holdout

    def generate(self) -> Tuple[List[Scene], List[Scene], List[Scene]]:
        """
        Generate the full dataset.

        Returns:
            (labeled, unlabeled, holdout) scene lists
        """
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        n_labeled, _, n_holdout = self.split_sizes()

        raw = [self._draw_scene(rng) for _ in range(cfg.n_scenes + n_holdout)]
        labeled_ids = set(rng.permutation(cfg.n_scenes)[:n_labeled].tolist())

        labeled, unlabeled, holdout = [], [], []
        for k, (field, coords, ambiguous) in enumerate(raw):
            if k >= cfg.n_scenes:
                holdout.append(self._make_scene(f"holdout-{k - cfg.n_scenes:05d}", field, coords, ambiguous, True))
            elif k in labeled_ids:
                labeled.append(self._make_scene(f"scene-{k:05d}", field, coords, ambiguous, True))
            else:
                unlabeled.append(self._make_scene(f"scene-{k:05d}", field, coords, ambiguous, False))

        self.logger.info(
            f"Generated {len(labeled)} labeled, {len(unlabeled)} unlabeled, {len(holdout)} holdout scenes "
            f"(seed={cfg.seed})"
        )
        return labeled, unlabeled, holdout

    def _make_scene(
        self,
        scene_id: str,
        field: np.ndarray,
        coords: np.ndarray,
        ambiguous: np.ndarray,
        is_labeled: bool
    ) -> Scene:
        # Unlabeled scenes keep their hidden points for evaluation; Scene.labels hides them.
        return Scene(
            field=field,
            gt_points=PointSet(coords=coords),
            scene_id=scene_id,
            is_labeled=is_labeled,
            ambiguous=ambiguous,
        )

    def _draw_scene(self, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        cfg = self.config
        size = cfg.field_size
        n_heads = int(rng.integers(cfg.heads_per_scene[0], cfg.heads_per_scene[1] + 1))
        coords = self._draw_positions(rng, n_heads)

        a_min, a_max = cfg.amplitude_range
        amplitudes = rng.uniform(a_min, a_max, n_heads)
        ambiguous = rng.random(n_heads) < cfg.ambiguous_fraction
        amplitudes[ambiguous] *= cfg.ambiguous_amplitude_scale

        field = render_field(coords, amplitudes, size, size, cfg.blob_sigma)
        if cfg.noise_std > 0:
            field = field + rng.normal(0.0, cfg.noise_std, field.shape)
        return field.astype(np.float32), coords, ambiguous

    def _draw_positions(self, rng: np.random.Generator, n_heads: int) -> np.ndarray:
        cfg = self.config
        size = float(cfg.field_size)
        if n_heads == 0:
            return np.zeros((0, 2))
        n_clusters = int(rng.integers(max(1, cfg.cluster_count[0]), cfg.cluster_count[1] + 1))
        centers = rng.uniform(0.0, size, (n_clusters, 2))
        members = rng.integers(0, n_clusters, n_heads)
        coords = centers[members] + rng.normal(0.0, cfg.cluster_spread, (n_heads, 2))

        for _ in range(self.MAX_RESAMPLE_ROUNDS):
            outside = np.any((coords < 0) | (coords >= size), axis=1)
            if not outside.any():
                break
            redraw = int(outside.sum())
            coords[outside] = centers[members[outside]] + rng.normal(0.0, cfg.cluster_spread, (redraw, 2))
        else:
            outside = np.any((coords < 0) | (coords >= size), axis=1)
            coords[outside] = rng.uniform(0.0, size, (int(outside.sum()), 2))
        return coords


def generate_dataset(config: SynthConfig) -> Tuple[List[Scene], List[Scene], List[Scene]]:
    """Convenience function: (labeled, unlabeled, holdout) for a config."""
    return SceneGenerator(config).generate()
