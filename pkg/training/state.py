"""
Trainer state and its checkpoint codec.

Layout: b"CPTS" | u16 version | u32 header_len | header JSON (step, rng state, counters)
        | student parameter block | teacher parameter block
        | u32 n | n f64 adam m | n f64 adam v | u32 crc32 of everything before
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from loguru import logger
from pydantic import Field

from app.config import TrainConfig
from app.errors import ArtifactIOError, CheckpointError, FormatVersionError
from app.models import ArrayModel, readonly_array
from net.checkpoint import decode_params, encode_params
from net.proposal_net import ModelParams

FORMAT_VERSION = 1
MAGIC = b"CPTS"
_PREFIX = struct.Struct("<4sHI")
_COUNT = struct.Struct("<I")
_CRC = struct.Struct("<I")


class TrainerState(ArrayModel):
    """Student, teacher, optimizer moments, step counter and generator state."""

    student: ModelParams
    teacher: ModelParams
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = Field(default=0, ge=0)
    rng_state: Dict[str, Any]
    counters: Dict[str, int] = Field(default_factory=dict)

    @classmethod
    def fresh(cls, config: TrainConfig) -> "TrainerState":
        """Initial state; the teacher starts as an exact copy of the student."""
        rng = np.random.Generator(np.random.PCG64(config.seed))
        student = ModelParams.initialize(config.model, rng)
        zeros = np.zeros(len(student))
        return cls(
            student=student,
            teacher=student.with_theta(student.theta),
            adam_m=readonly_array(zeros),
            adam_v=readonly_array(zeros),
            step=0,
            rng_state=rng.bit_generator.state,
            counters={"clamp_count": 0, "pseudo_points": 0},
        )

    def generator(self) -> np.random.Generator:
        """A generator positioned exactly where this state left off."""
        bit_generator = np.random.PCG64()
        bit_generator.state = self.rng_state
        return np.random.Generator(bit_generator)


def encode_state(state: TrainerState) -> bytes:
    """Serialize a trainer state bit-exactly."""
    header = json.dumps(
        {"step": state.step, "rng_state": state.rng_state, "counters": state.counters},
        sort_keys=True,
    ).encode("utf-8")
    n = state.adam_m.shape[0]
    body = b"".join([
        _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)),
        header,
        encode_params(state.student),
        encode_params(state.teacher),
        _COUNT.pack(n),
        np.ascontiguousarray(state.adam_m, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.adam_v, dtype="<f8").tobytes(),
    ])
    return body + _CRC.pack(zlib.crc32(body))


def decode_state(data: bytes) -> TrainerState:
    """Parse a trainer checkpoint; raises CheckpointError on any corruption."""
    if len(data) < _PREFIX.size + _CRC.size:
        raise CheckpointError("truncated trainer checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"not a trainer checkpoint (marker {magic!r})")
    if version != FORMAT_VERSION:
        raise FormatVersionError("trainer checkpoint", version, FORMAT_VERSION)
    (crc,) = _CRC.unpack_from(data, len(data) - _CRC.size)
    if crc != zlib.crc32(data[:-_CRC.size]):
        raise CheckpointError("trainer checkpoint failed its checksum")

    offset = _PREFIX.size
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable trainer checkpoint header: {e}") from e
    offset += header_len

    student, offset = decode_params(data, offset)
    teacher, offset = decode_params(data, offset)
    if len(data) - offset < _COUNT.size:
        raise CheckpointError("truncated optimizer moments")
    (n,) = _COUNT.unpack_from(data, offset)
    offset += _COUNT.size
    if offset + 16 * n + _CRC.size != len(data):
        raise CheckpointError(f"optimizer moments hold {n} values but the file size disagrees")
    adam_m = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64)
    adam_v = np.frombuffer(data, dtype="<f8", count=n, offset=offset + 8 * n).astype(np.float64)

    try:
        return TrainerState(
            student=student,
            teacher=teacher,
            adam_m=readonly_array(adam_m),
            adam_v=readonly_array(adam_v),
            step=header["step"],
            rng_state=header["rng_state"],
            counters=header.get("counters", {}),
        )
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"invalid trainer checkpoint: {e}") from e


def save_checkpoint(state: TrainerState, path: Union[str, Path]) -> None:
    """Write a trainer checkpoint."""
    try:
        Path(path).write_bytes(encode_state(state))
    except OSError as e:
        raise ArtifactIOError(f"Cannot write trainer checkpoint {path}: {e}") from e
    logger.bind(component="TrainerState").debug(f"Saved trainer state at step {state.step} to {path}")


def load_checkpoint(path: Union[str, Path]) -> TrainerState:
    """Read a trainer checkpoint."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"Cannot read trainer checkpoint {path}: {e}") from e
    return decode_state(data)
