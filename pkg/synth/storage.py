"""
Dataset storage.
Binary scene files (little-endian, bit-exact) plus a human-readable JSON index.

File layout:
    header  : b"CPDS" | u16 version | u32 config_len | config JSON | u32 record_count
    record  : b"SCNE" | u16 id_len | id utf-8 | u8 is_labeled | u32 height | u32 width
              | height*width f32 field | u8 has_points | u32 n_points | n*2 f64 (x, y)
              | u8 has_ambiguous | n u8 mask
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from app.config import SynthConfig
from app.errors import ArtifactIOError, DatasetFormatError, FormatVersionError
from app.models import PointSet, Scene

FORMAT_VERSION = 1
FILE_MAGIC = b"CPDS"
RECORD_MAGIC = b"SCNE"
INDEX_NAME = "index.json"
SPLITS = ("labeled", "unlabeled", "holdout")


class SyntheticDataset(BaseModel):
    """The three splits of a generated dataset."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labeled: List[Scene]
    unlabeled: List[Scene]
    holdout: List[Scene]
    config: Optional[SynthConfig] = None

    def split(self, name: str) -> List[Scene]:
        return getattr(self, name)


class _Reader:
    """Cursor over a byte buffer that reports parse errors with their location."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0
        self.record: Optional[int] = None

    def take(self, size: int, what: str) -> bytes:
        if size < 0 or self.offset + size > len(self.data):
            raise DatasetFormatError(
                f"truncated data while reading {what} ({size} bytes needed, "
                f"{len(self.data) - self.offset} available)",
                record=self.record,
                offset=self.offset,
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def expect(self, magic: bytes, what: str) -> None:
        start = self.offset
        found = self.take(len(magic), what)
        if found != magic:
            raise DatasetFormatError(f"bad {what} marker {found!r}", record=self.record, offset=start)


def _encode_scene(scene: Scene) -> bytes:
    scene_id = scene.scene_id.encode("utf-8")
    parts = [
        RECORD_MAGIC,
        struct.pack("<H", len(scene_id)),
        scene_id,
        struct.pack("<BII", int(scene.is_labeled), scene.height, scene.width),
        np.ascontiguousarray(scene.field, dtype="<f4").tobytes(),
    ]
    if scene.gt_points is None:
        parts.append(struct.pack("<BI", 0, 0))
    else:
        coords = scene.gt_points.coords
        parts.append(struct.pack("<BI", 1, coords.shape[0]))
        parts.append(np.ascontiguousarray(coords, dtype="<f8").tobytes())
    if scene.ambiguous is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(scene.ambiguous.astype(np.uint8).tobytes())
    return b"".join(parts)


def _decode_scene(reader: _Reader) -> Scene:
    reader.expect(RECORD_MAGIC, "record")
    (id_len,) = reader.unpack("<H", "scene id length")
    try:
        scene_id = reader.take(id_len, "scene id").decode("utf-8")
    except UnicodeDecodeError as e:
        raise DatasetFormatError("scene id is not valid utf-8", record=reader.record, offset=reader.offset) from e
    is_labeled, height, width = reader.unpack("<BII", "scene dimensions")
    field = np.frombuffer(reader.take(4 * height * width, "field data"), dtype="<f4")
    field = field.astype(np.float32).reshape(height, width)

    has_points, n_points = reader.unpack("<BI", "point count")
    gt_points = None
    if has_points:
        points_at = reader.offset
        coords = np.frombuffer(reader.take(16 * n_points, "points"), dtype="<f8")
        try:
            gt_points = PointSet(coords=coords.astype(np.float64).reshape(n_points, 2))
        except ValueError as e:
            raise DatasetFormatError(f"invalid points: {e}", record=reader.record, offset=points_at) from e
    (has_ambiguous,) = reader.unpack("<B", "ambiguous flag")
    ambiguous = None
    if has_ambiguous:
        ambiguous = np.frombuffer(reader.take(n_points, "ambiguous mask"), dtype=np.uint8).astype(bool)

    try:
        return Scene(
            field=field,
            gt_points=gt_points,
            scene_id=scene_id,
            is_labeled=bool(is_labeled),
            ambiguous=ambiguous,
        )
    except ValueError as e:
        raise DatasetFormatError(f"invalid scene: {e}", record=reader.record, offset=reader.offset) from e


def encode_dataset(scenes: List[Scene], config: Optional[SynthConfig] = None) -> Tuple[bytes, List[int]]:
    """Serialize scenes; returns the bytes and the byte offset of every record."""
    config_json = json.dumps(config.model_dump(mode="json") if config else None, sort_keys=True).encode("utf-8")
    header = b"".join([
        FILE_MAGIC,
        struct.pack("<HI", FORMAT_VERSION, len(config_json)),
        config_json,
        struct.pack("<I", len(scenes)),
    ])
    chunks, offsets = [header], []
    position = len(header)
    for scene in scenes:
        record = _encode_scene(scene)
        offsets.append(position)
        chunks.append(record)
        position += len(record)
    return b"".join(chunks), offsets


def decode_dataset(data: bytes) -> Tuple[List[Scene], Optional[Dict[str, Any]]]:
    """Parse serialized scenes; returns them with the echoed generator config."""
    reader = _Reader(data)
    reader.expect(FILE_MAGIC, "file")
    version, config_len = reader.unpack("<HI", "header")
    if version != FORMAT_VERSION:
        raise FormatVersionError("dataset", version, FORMAT_VERSION)
    try:
        config = json.loads(reader.take(config_len, "config echo").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetFormatError("config echo is not valid JSON", offset=reader.offset) from e
    (count,) = reader.unpack("<I", "record count")

    scenes = []
    for index in range(count):
        reader.record = index
        scenes.append(_decode_scene(reader))
    if reader.offset != len(data):
        raise DatasetFormatError("trailing bytes after last record", record=count, offset=reader.offset)
    return scenes, config


def save_dataset(scenes: List[Scene], path: Union[str, Path], config: Optional[SynthConfig] = None) -> List[int]:
    """
    Write scenes to a binary dataset file.

    Args:
        scenes: Scenes to store
        path: Destination file
        config: Generator config echoed in the header

    Returns:
        Byte offset of every record
    """
    data, offsets = encode_dataset(scenes, config)
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise ArtifactIOError(f"Cannot write dataset file {path}: {e}") from e
    logger.debug(f"Wrote {len(scenes)} scenes to {path}")
    return offsets


def load_dataset(path: Union[str, Path]) -> List[Scene]:
    """Read scenes from a binary dataset file."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"Cannot read dataset file {path}: {e}") from e
    scenes, _ = decode_dataset(data)
    return scenes


def save_dataset_dir(dataset: SyntheticDataset, out_dir: Union[str, Path]) -> Dict[str, str]:
    """
    Write all splits and the JSON index into a directory.

    Returns:
        Mapping of artifact name to path
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"Cannot create dataset directory {out}: {e}") from e

    artifacts: Dict[str, str] = {}
    index: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "config": dataset.config.model_dump(mode="json") if dataset.config else None,
        "splits": {},
    }
    for name in SPLITS:
        scenes = dataset.split(name)
        file_path = out / f"{name}.cpds"
        offsets = save_dataset(scenes, file_path, dataset.config)
        artifacts[name] = str(file_path)
        index["splits"][name] = {
            "file": file_path.name,
            "records": [
                {
                    "scene_id": scene.scene_id,
                    "is_labeled": scene.is_labeled,
                    "height": scene.height,
                    "width": scene.width,
                    "n_points": len(scene.gt_points) if scene.gt_points is not None else 0,
                    "byte_offset": offset,
                }
                for scene, offset in zip(scenes, offsets)
            ],
        }

    index_path = out / INDEX_NAME
    try:
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"Cannot write dataset index {index_path}: {e}") from e
    artifacts["index"] = str(index_path)
    return artifacts


def load_dataset_dir(dataset_dir: Union[str, Path]) -> SyntheticDataset:
    """Read a dataset directory written by save_dataset_dir."""
    root = Path(dataset_dir)
    index_path = root / INDEX_NAME
    if not index_path.exists():
        raise ArtifactIOError(f"Dataset not found: {index_path} does not exist")
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"dataset index {index_path} is not valid JSON: {e}") from e

    version = index.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError("dataset", version if isinstance(version, int) else -1, FORMAT_VERSION)

    try:
        files = {name: index["splits"][name]["file"] for name in SPLITS}
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"dataset index {index_path} is missing split entry {e}") from e
    splits = {name: load_dataset(root / file_name) for name, file_name in files.items()}
    config = SynthConfig.model_validate(index["config"]) if index.get("config") else None
    logger.info(
        f"Loaded dataset {root}: " + ", ".join(f"{name}={len(scenes)}" for name, scenes in splits.items())
    )
    return SyntheticDataset(config=config, **splits)
