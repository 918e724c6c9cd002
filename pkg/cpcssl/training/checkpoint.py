"""Binary checkpoints: parameters, Adam moments, random stream and progress counters."""
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from cpcssl.autodiff import RngState, Tensor
from cpcssl.core.config import logger
from cpcssl.core.exceptions import ChecksumError, CheckpointError, IncompatibleCheckpointError
from cpcssl.training.optim import AdamState

MAGIC = b"CPCS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIB")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

ADAM_M = "adam.m."
ADAM_V = "adam.v."
META_KEYS = ("adam.step", "epoch", "step", "rng.seed_hi", "rng.seed_lo", "rng.counter_hi", "rng.counter_lo")


@dataclass
class Checkpoint:
    mode: int
    params: Dict[str, np.ndarray]
    adam: AdamState
    rng: RngState
    epoch: int
    step: int
    version: int = FORMAT_VERSION


def _halves(value: int):
    return float(value >> 32), float(value & 0xFFFFFFFF)


def _join(hi: np.ndarray, lo: np.ndarray) -> int:
    return (int(hi) << 32) | int(lo)


def _records(ckpt: Checkpoint) -> Dict[str, np.ndarray]:
    records = {name: ckpt.params[name] for name in sorted(ckpt.params)}
    for name in sorted(ckpt.adam.m):
        records[ADAM_M + name] = ckpt.adam.m[name]
        records[ADAM_V + name] = ckpt.adam.v[name]
    seed_hi, seed_lo = _halves(ckpt.rng.seed)
    counter_hi, counter_lo = _halves(ckpt.rng.counter)
    meta = [ckpt.adam.step, ckpt.epoch, ckpt.step, seed_hi, seed_lo, counter_hi, counter_lo]
    records.update({key: np.asarray(float(v)) for key, v in zip(META_KEYS, meta)})
    return records


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [_HEADER.pack(MAGIC, ckpt.version, ckpt.mode)]
    for name, array in _records(ckpt).items():
        array = np.asarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)) + encoded + _U32.pack(array.ndim))
        parts.extend(_U64.pack(d) for d in array.shape)
        parts.append(array.tobytes(order="C"))
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def decode_checkpoint(raw: bytes, source: str = "checkpoint") -> Checkpoint:
    if len(raw) < _HEADER.size + _U32.size:
        raise ChecksumError(f"{source} is truncated ({len(raw)} bytes)")
    body, (crc,) = raw[:-4], _U32.unpack(raw[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError(f"{source} failed its CRC32 check")
    magic, version, mode = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"{source} is not a checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(f"{source} has format version {version}, expected {FORMAT_VERSION}")

    records: Dict[str, np.ndarray] = {}
    offset = _HEADER.size
    try:
        while offset < len(body):
            (name_len,) = _U32.unpack_from(body, offset)
            offset += 4
            name = body[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = _U32.unpack_from(body, offset)
            offset += 4
            shape = tuple(_U64.unpack_from(body, offset + 8 * i)[0] for i in range(rank))
            offset += 8 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if offset + 8 * count > len(body):
                raise CheckpointError(f"{source}: record {name} overruns the file")
            records[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
            offset += 8 * count
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{source}: malformed record ({exc})")

    missing = [key for key in META_KEYS if key not in records]
    if missing:
        raise CheckpointError(f"{source} lacks {', '.join(missing)}")
    meta = {key: records.pop(key) for key in META_KEYS}
    m = {k[len(ADAM_M):]: records.pop(k) for k in [k for k in records if k.startswith(ADAM_M)]}
    v = {k[len(ADAM_V):]: records.pop(k) for k in [k for k in records if k.startswith(ADAM_V)]}
    return Checkpoint(
        mode,
        records,
        AdamState(m, v, int(meta["adam.step"])),
        RngState(_join(meta["rng.seed_hi"], meta["rng.seed_lo"]), _join(meta["rng.counter_hi"], meta["rng.counter_lo"])),
        int(meta["epoch"]),
        int(meta["step"]),
        version,
    )


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        tmp.write_bytes(encode_checkpoint(ckpt))
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}")
    logger.info(f"Checkpoint written to {path} (epoch {ckpt.epoch}, step {ckpt.step})")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")
    return decode_checkpoint(raw, str(path))


def restore_params(params: Mapping[str, Tensor], ckpt: Checkpoint) -> None:
    """Copy checkpointed values into ``params``; every name and shape must match."""
    expected, found = set(params), set(ckpt.params)
    if expected != found:
        diff = sorted(expected.symmetric_difference(found))
        raise IncompatibleCheckpointError(f"checkpoint parameters differ from the model: {', '.join(diff[:5])}")
    for name, tensor in params.items():
        value = ckpt.params[name]
        if value.shape != tensor.shape:
            raise IncompatibleCheckpointError(f"{name}: checkpoint shape {value.shape}, model shape {tensor.shape}")
        tensor.data = value.copy()
