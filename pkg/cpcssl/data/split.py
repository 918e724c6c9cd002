"""Labeled/unlabeled partition and its JSON manifest."""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from cpcssl.autodiff import RngState
from cpcssl.core.config import logger
from cpcssl.core.exceptions import ConfigError, DataError
from cpcssl.data.samples import SequenceDataset, SequenceSample


@dataclass
class SplitResult:
    labeled: List[SequenceSample]
    unlabeled: List[SequenceSample]
    hidden_labels: Dict[int, int]  # unlabeled sample id -> label, kept for evaluation only
    labeled_groups: List[int]
    seed: int
    fraction: float
    retained: List[SequenceSample] = field(default_factory=list)

    @property
    def rho(self) -> float:
        return len(self.unlabeled) / len(self.labeled)

    def manifest(self) -> Dict:
        return {"seed": self.seed, "fraction": self.fraction, "labeled_ids": self.labeled_groups}


def labeled_count(fraction: float, total: int) -> int:
    """round(fraction * total), halves rounded up."""
    return int(math.floor(fraction * total + 0.5))


def partition(dataset: SequenceDataset, labeled_groups, seed: int, fraction: float) -> SplitResult:
    chosen = set(labeled_groups)
    labeled, unlabeled, retained, hidden = [], [], [], {}
    for sample in dataset.samples:
        if sample.group in chosen:
            labeled.append(sample)
        else:
            if sample.label is not None:
                hidden[sample.id] = sample.label
            retained.append(sample)
            unlabeled.append(sample.without_label())
    logger.info(f"Split {len(dataset)} sequences: {len(labeled)} labeled, {len(unlabeled)} unlabeled")
    return SplitResult(labeled, unlabeled, hidden, sorted(int(g) for g in chosen), seed, fraction, retained)


def split_labeled(dataset: SequenceDataset, fraction: float, rng: RngState, allow_full: bool = False) -> SplitResult:
    """Uniform sample of round(fraction * groups) groups keeps labels; no class balancing.

    Sequences cut from one image or document move together.
    """
    upper_ok = fraction <= 1.0 if allow_full else fraction < 1.0
    if not (fraction > 0 and upper_ok):
        bound = "(0, 1]" if allow_full else "(0, 1)"
        raise ConfigError(f"labeled fraction must be in {bound}, got {fraction}", key="data.labeled_fraction")
    groups = sorted(dataset.groups())
    n_labeled = labeled_count(fraction, len(groups))
    if n_labeled == 0:
        raise DataError(f"labeled fraction {fraction} of {len(groups)} items selects nothing")
    gen = rng.child("split").generator()
    chosen = gen.choice(np.asarray(groups), size=n_labeled, replace=False)
    return partition(dataset, chosen.tolist(), rng.seed, fraction)


def write_manifest(path: Union[str, Path], split: SplitResult) -> None:
    Path(path).write_text(json.dumps(split.manifest(), indent=2))


def apply_manifest(dataset: SequenceDataset, path: Union[str, Path]) -> SplitResult:
    try:
        manifest = json.loads(Path(path).read_text())
        seed, fraction, ids = int(manifest["seed"]), float(manifest["fraction"]), list(manifest["labeled_ids"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read split manifest {path}: {exc}")
    unknown = set(ids) - set(dataset.groups())
    if unknown:
        raise DataError(f"split manifest {path} names {len(unknown)} unknown items, e.g. {min(unknown)}")
    if not ids:
        raise DataError(f"split manifest {path} has no labeled items")
    return partition(dataset, ids, seed, fraction)
