"""
Parameter checkpoint codec.

Layout: b"CPNT" | u16 version | u16 patch_size | u16 hidden_width | u16 stride
        | u32 n | n f64 theta (little-endian) | u32 crc32 of everything before
"""

import struct
import zlib
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from loguru import logger

from app.errors import ArtifactIOError, CheckpointError, FormatVersionError
from net.proposal_net import ModelParams

FORMAT_VERSION = 1
MAGIC = b"CPNT"
_HEADER = struct.Struct("<4sHHHHI")
_CRC = struct.Struct("<I")


def encode_params(params: ModelParams) -> bytes:
    """Serialize parameters bit-exactly."""
    body = _HEADER.pack(
        MAGIC, FORMAT_VERSION, params.patch_size, params.hidden_width, params.stride, len(params)
    ) + np.ascontiguousarray(params.theta, dtype="<f8").tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode_params(data: bytes, offset: int = 0) -> Tuple[ModelParams, int]:
    """
    Parse one parameter block.

    Args:
        data: Buffer holding the block
        offset: Where the block starts

    Returns:
        The parameters and the offset just past the block
    """
    if len(data) - offset < _HEADER.size:
        raise CheckpointError(f"truncated parameter header at byte {offset}")
    magic, version, patch_size, hidden_width, stride, count = _HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise CheckpointError(f"bad parameter block marker {magic!r} at byte {offset}")
    if version != FORMAT_VERSION:
        raise FormatVersionError("parameter checkpoint", version, FORMAT_VERSION)

    body_end = offset + _HEADER.size + 8 * count
    if len(data) < body_end + _CRC.size:
        raise CheckpointError(f"truncated parameter block at byte {offset}: expected {count} values")
    (crc,) = _CRC.unpack_from(data, body_end)
    if crc != zlib.crc32(data[offset:body_end]):
        raise CheckpointError(f"parameter block at byte {offset} failed its checksum")

    theta = np.frombuffer(data, dtype="<f8", count=count, offset=offset + _HEADER.size).astype(np.float64)
    try:
        params = ModelParams(theta=theta, patch_size=patch_size, hidden_width=hidden_width, stride=stride)
    except ValueError as e:
        raise CheckpointError(f"invalid parameter block: {e}") from e
    return params, body_end + _CRC.size


def save_params(params: ModelParams, path: Union[str, Path]) -> None:
    """Write a parameter checkpoint."""
    try:
        Path(path).write_bytes(encode_params(params))
    except OSError as e:
        raise ArtifactIOError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug(f"Saved {len(params)} parameters to {path}")


def load_params(path: Union[str, Path]) -> ModelParams:
    """Read a parameter checkpoint."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"Cannot read checkpoint {path}: {e}") from e
    params, end = decode_params(data)
    if end != len(data):
        raise CheckpointError(f"trailing bytes after parameter block in {path}")
    return params
