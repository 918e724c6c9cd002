"""Gaussian patch sequences with closed-form mutual information.

Each sequence draws a class y and a shared factor u ~ N(0, I); patch i is
``A_i [onehot(y) * class_scale; u] + noise_sigma * eps_i``. Given y the
patches are jointly Gaussian, so the information between the context
patches and any future patch has a closed form. Optional distractor
coordinates, i.i.d. ``N(0, distractor_sigma^2)`` per patch, are appended;
they carry no information about the class or the other patches.
"""
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from cpcssl.autodiff import RngState
from cpcssl.core.config import logger
from cpcssl.core.exceptions import ConfigError, DataError
from cpcssl.data.samples import SequenceDataset, SequenceSample

SEQUENCES_FILE = "sequences.npy"
LABELS_FILE = "labels.npy"
SPEC_FILE = "spec.json"
TRUTH_FILE = "truth.json"
SIGMA_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


class SyntheticSpec(BaseModel):
    """Generator settings; ``emission`` (T×P×(M+D_latent)) is drawn from ``emission_seed`` when omitted."""

    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(10, ge=2)
    latent: int = Field(4, ge=1, description="shared-factor dimension D_latent")
    noise_sigma: float = Field(0.5, ge=0.0)
    length: int = Field(5, ge=2, description="patches per sequence T")
    patch_dim: int = Field(16, ge=1)
    context: int = Field(2, ge=1, description="context length t used for the truth manifest")
    class_scale: float = Field(1.0, ge=0.0)
    distractor_dim: int = Field(0, ge=0, description="appended coordinates of pure per-patch noise")
    distractor_sigma: float = Field(1.0, ge=0.0)
    emission_seed: int = Field(0, ge=0)
    emission: Optional[List[List[List[float]]]] = None

    def emission_matrix(self) -> np.ndarray:
        if self.emission is not None:
            a = np.asarray(self.emission, dtype=np.float64)
            expected = (self.length, self.patch_dim, self.num_classes + self.latent)
            if a.shape != expected:
                raise ConfigError(f"emission has shape {a.shape}, expected {expected}", key="emission")
            return a
        gen = RngState(self.emission_seed).child("emission").generator()
        a = gen.standard_normal((self.length, self.patch_dim, self.num_classes + self.latent))
        a /= np.sqrt(self.num_classes + self.latent)
        a[:, :, :self.num_classes] *= self.class_scale
        return a


def load_spec(path: Union[str, Path]) -> SyntheticSpec:
    try:
        return SyntheticSpec.model_validate_json(Path(path).read_text())
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], key=".".join(str(p) for p in first["loc"]))


def gaussian_mi(cov: np.ndarray, split: int) -> float:
    """I(X; Y) for a joint Gaussian whose first ``split`` coordinates are X."""
    _, logdet_x = np.linalg.slogdet(cov[:split, :split])
    _, logdet_y = np.linalg.slogdet(cov[split:, split:])
    _, logdet_xy = np.linalg.slogdet(cov)
    return max(0.0, 0.5 * (logdet_x + logdet_y - logdet_xy))


def conditional_mi(spec: SyntheticSpec, step: int, noise_sigma: Optional[float] = None) -> float:
    """MI between the first ``context`` patches and patch ``context + step - 1``, given the class.

    Distractor coordinates are independent of everything else and drop out.
    """
    sigma = spec.noise_sigma if noise_sigma is None else noise_sigma
    if sigma == 0:
        return float("inf")
    latent = spec.emission_matrix()[:, :, spec.num_classes:]
    positions = list(range(spec.context)) + [spec.context + step - 1]
    loads = np.concatenate([latent[i] for i in positions], axis=0)
    cov = loads @ loads.T + sigma ** 2 * np.eye(loads.shape[0])
    return gaussian_mi(cov, spec.context * spec.patch_dim)


def truth_manifest(spec: SyntheticSpec, sigma_grid: Sequence[float] = SIGMA_GRID) -> Dict:
    steps = range(1, spec.length - spec.context + 1)
    return {
        "context": spec.context,
        "noise_sigma": spec.noise_sigma,
        "mi_given_label": [conditional_mi(spec, k) for k in steps],
        "sigma_grid": list(sigma_grid),
        "mi_grid": [[conditional_mi(spec, k, s) for k in steps] for s in sigma_grid],
    }


def generate_arrays(spec: SyntheticSpec, count: int, rng: RngState):
    if count < 1:
        raise DataError(f"synthetic count must be positive, got {count}")
    if spec.context >= spec.length:
        raise ConfigError(f"context {spec.context} leaves no future patch in length {spec.length}", key="context")
    gen = rng.child("synthetic").generator()
    labels = gen.integers(spec.num_classes, size=count)
    shared = gen.standard_normal((count, spec.latent))
    noise = gen.standard_normal((count, spec.length, spec.patch_dim))
    latent = np.concatenate([np.eye(spec.num_classes)[labels], shared], axis=1)
    sequences = np.einsum("tpm,nm->ntp", spec.emission_matrix(), latent) + spec.noise_sigma * noise
    if spec.distractor_dim:
        distractors = gen.standard_normal((count, spec.length, spec.distractor_dim))
        sequences = np.concatenate([sequences, spec.distractor_sigma * distractors], axis=2)
    return sequences, labels.astype(np.int64)


def sequences_to_dataset(sequences: np.ndarray, labels: np.ndarray, num_classes: int) -> SequenceDataset:
    """Each patch becomes a ``1×1×P`` block so the vision encoder can consume it."""
    count, length, dim = sequences.shape
    samples = [SequenceSample(sequences[n].reshape(length, 1, 1, dim), int(labels[n]), n) for n in range(count)]
    return SequenceDataset(samples, num_classes, "vision", (1, 1, dim))


def make_synthetic_dataset(spec: SyntheticSpec, count: int, rng: RngState) -> SequenceDataset:
    sequences, labels = generate_arrays(spec, count, rng)
    return sequences_to_dataset(sequences, labels, spec.num_classes)


def write_synthetic(out_dir: Union[str, Path], spec: SyntheticSpec, count: int, seed: int) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sequences, labels = generate_arrays(spec, count, RngState(seed))
    np.save(out / SEQUENCES_FILE, sequences)
    np.save(out / LABELS_FILE, labels)
    (out / SPEC_FILE).write_text(spec.model_dump_json(indent=2))
    (out / TRUTH_FILE).write_text(json.dumps(truth_manifest(spec), indent=2))
    logger.info(f"Wrote {count} synthetic sequences ({spec.num_classes} classes, sigma={spec.noise_sigma}) to {out}")
    return out


def read_synthetic(directory: Union[str, Path]) -> SequenceDataset:
    directory = Path(directory)
    try:
        sequences = np.load(directory / SEQUENCES_FILE)
        labels = np.load(directory / LABELS_FILE)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read synthetic data in {directory}: {exc}")
    spec = load_spec(directory / SPEC_FILE)
    if sequences.ndim != 3 or len(labels) != len(sequences):
        raise DataError(f"{directory}: sequences {sequences.shape} do not match {len(labels)} labels")
    return sequences_to_dataset(sequences, labels, spec.num_classes)
