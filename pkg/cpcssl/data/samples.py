from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

PatchRef = Tuple[int, int]  # (sample id, position)


@dataclass
class SequenceSample:
    """Ordered patches (image crops or token-id sentences) with an optional label.

    ``group`` ties together the sequences cut from one image or document; all
    of them share its label and evaluation pools over the whole group.
    """

    patches: np.ndarray
    label: Optional[int]
    id: int
    group: int = -1

    def __post_init__(self):
        if self.group < 0:
            self.group = self.id

    @property
    def length(self) -> int:
        return int(self.patches.shape[0])

    def without_label(self) -> "SequenceSample":
        return replace(self, label=None)


@dataclass
class StepTask:
    """Candidate set X for one prediction step; ``positive_index`` is d."""

    positive: PatchRef
    candidates: List[PatchRef]
    positive_index: int

    @property
    def negative_refs(self) -> List[PatchRef]:
        return [ref for i, ref in enumerate(self.candidates) if i != self.positive_index]


@dataclass
class ContrastiveTask:
    sample_id: int
    context_indices: List[int]
    steps: List[StepTask] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.steps[0].candidates) if self.steps else 0


@dataclass
class SequenceDataset:
    """Flat list of sequences plus what the encoder needs to know about them."""

    samples: List[SequenceSample]
    num_classes: int
    kind: str  # "vision" or "text"
    patch_shape: Tuple[int, ...]
    vocabulary: Optional[List[str]] = None

    def __len__(self) -> int:
        return len(self.samples)

    def by_id(self) -> Dict[int, SequenceSample]:
        return {s.id: s for s in self.samples}

    def groups(self) -> Dict[int, List[SequenceSample]]:
        grouped: Dict[int, List[SequenceSample]] = {}
        for sample in self.samples:
            grouped.setdefault(sample.group, []).append(sample)
        return grouped

    def with_samples(self, samples: List[SequenceSample]) -> "SequenceDataset":
        return replace(self, samples=samples)
