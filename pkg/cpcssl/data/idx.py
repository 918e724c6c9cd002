"""IDX raster files: u8 image stacks (magic 0x803) and u8 label vectors (magic 0x801)."""
import struct
from pathlib import Path
from typing import Union

import numpy as np

from cpcssl.core.config import logger
from cpcssl.core.exceptions import DataError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

PathLike = Union[str, Path]


def _read(path: PathLike, magic: int, rank: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    header = 4 + 4 * rank
    if len(raw) < header:
        raise DataError(f"{path}: truncated IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise DataError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{rank}I", raw[4:header])
    expected = int(np.prod(dims))
    if len(raw) - header != expected:
        raise DataError(f"{path}: {len(raw) - header} payload bytes, header promises {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def read_idx_images(path: PathLike) -> np.ndarray:
    images = _read(path, IMAGE_MAGIC, 3)
    logger.info(f"Loaded {images.shape[0]} images of {images.shape[1]}x{images.shape[2]} from {path}")
    return images


def read_idx_labels(path: PathLike) -> np.ndarray:
    return _read(path, LABEL_MAGIC, 1).astype(np.int64)


def write_idx_images(path: PathLike, images: np.ndarray) -> None:
    images = np.asarray(images)
    if images.ndim != 3:
        raise DataError(f"IDX images must be count×H×W, got shape {images.shape}")
    Path(path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.astype(np.uint8).tobytes())


def write_idx_labels(path: PathLike, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise DataError("IDX labels must fit in u8")
    Path(path).write_bytes(struct.pack(">2I", LABEL_MAGIC, len(labels)) + labels.astype(np.uint8).tobytes())
