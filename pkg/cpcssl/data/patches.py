"""Overlapping patch grids and column sequences for images."""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from cpcssl.core.exceptions import DataError, ShapeError
from cpcssl.data.samples import SequenceSample


@dataclass(frozen=True)
class PatchGridSpec:
    image_size: int
    patch: int
    stride: int

    def __post_init__(self):
        if self.patch < 1 or self.stride < 1 or self.patch > self.image_size:
            raise ShapeError(f"invalid patch grid: image {self.image_size}, patch {self.patch}, stride {self.stride}")
        if (self.image_size - self.patch) % self.stride:
            raise ShapeError(f"(image_size - patch) = {self.image_size - self.patch} is not divisible by stride {self.stride}")
        if self.stride > self.patch:
            raise ShapeError(f"stride {self.stride} larger than patch {self.patch} leaves pixels uncovered")

    @property
    def side(self) -> int:
        """Grid side G."""
        return (self.image_size - self.patch) // self.stride + 1

    @property
    def overlap(self) -> int:
        return self.patch - self.stride


def as_chw(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3:
        raise ShapeError(f"image must be H×W or C×H×W, got shape {image.shape}")
    return image


def extract_patch_grid(image: np.ndarray, spec: PatchGridSpec) -> np.ndarray:
    """``G×G×C×p×p`` grid; patch (i, j) covers rows [i*s, i*s+p) and cols [j*s, j*s+p)."""
    image = as_chw(image)
    if image.shape[1] != spec.image_size or image.shape[2] != spec.image_size:
        raise ShapeError(f"image of shape {image.shape[1:]} does not match grid size {spec.image_size}")
    g, p, s = spec.side, spec.patch, spec.stride
    grid = np.empty((g, g, image.shape[0], p, p))
    for i in range(g):
        for j in range(g):
            grid[i, j] = image[:, i * s:i * s + p, j * s:j * s + p]
    return grid


def grid_to_sequences(grid: np.ndarray, label: Optional[int], first_id: int, group: int = -1) -> List[SequenceSample]:
    """One sequence per column, patches ordered top to bottom; all share ``label``."""
    if grid.ndim < 2 or grid.shape[0] != grid.shape[1]:
        raise ShapeError(f"grid must be square, got shape {grid.shape[:2]}")
    group = first_id if group < 0 else group
    return [SequenceSample(np.ascontiguousarray(grid[:, j]), label, first_id + j, group) for j in range(grid.shape[1])]


def images_to_sequences(images: np.ndarray, labels: Optional[np.ndarray], spec: PatchGridSpec) -> List[SequenceSample]:
    """Column sequences for a stack of ``count×H×W`` u8 images scaled to [0, 1]; the group is the image index."""
    if labels is not None and len(labels) != len(images):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    samples: List[SequenceSample] = []
    g = spec.side
    for n, image in enumerate(images):
        grid = extract_patch_grid(np.asarray(image, dtype=np.float64) / 255.0, spec)
        label = None if labels is None else int(labels[n])
        samples.extend(grid_to_sequences(grid, label, n * g, group=n))
    return samples
