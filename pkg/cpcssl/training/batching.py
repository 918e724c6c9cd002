"""Mixed labeled/unlabeled minibatches with labeled-set recycling."""
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence

from cpcssl.autodiff import RngState
from cpcssl.core.exceptions import ConfigError, DataError
from cpcssl.data.samples import SequenceSample


@dataclass
class MixedBatch:
    labeled: List[SequenceSample] = field(default_factory=list)
    unlabeled: List[SequenceSample] = field(default_factory=list)

    @property
    def samples(self) -> List[SequenceSample]:
        return self.labeled + self.unlabeled

    def __len__(self) -> int:
        return len(self.labeled) + len(self.unlabeled)


class RecyclingIterator:
    """Endless iterator over ``items``; reshuffles with a fresh stream on every pass."""

    def __init__(self, items: Sequence[SequenceSample], rng: RngState):
        if not items:
            raise DataError("cannot iterate an empty split")
        self.items = list(items)
        self.rng = rng
        self.passes = 0
        self._order: List[int] = []

    def __iter__(self) -> Iterator[SequenceSample]:
        return self

    def __next__(self) -> SequenceSample:
        if not self._order:
            gen = self.rng.child(f"pass:{self.passes}").generator()
            self._order = gen.permutation(len(self.items)).tolist()[::-1]
            self.passes += 1
        return self.items[self._order.pop()]


def make_mixed_batch(labeled: Iterator[SequenceSample], unlabeled: Iterator[SequenceSample], size: int) -> MixedBatch:
    """``size/2`` items from each iterator."""
    if size < 2 or size % 2:
        raise ConfigError(f"mixed batch size must be even and >= 2, got {size}", key="train.batch_size")
    half = size // 2
    return MixedBatch([next(labeled) for _ in range(half)], [next(unlabeled) for _ in range(half)])


def epoch_batches(labeled: Sequence[SequenceSample], unlabeled: Sequence[SequenceSample], size: int,
                  rng: RngState, epoch: int) -> List[MixedBatch]:
    """Batches for one epoch; its length is set by the unlabeled split, labeled items recycle.

    Without unlabeled data every batch holds ``size`` labeled items and the
    epoch covers the labeled split once.
    """
    epoch_rng = rng.child(f"epoch:{epoch}")
    labeled_iter = RecyclingIterator(labeled, epoch_rng.child("labeled"))
    if not unlabeled:
        count = max(1, math.ceil(len(labeled) / size))
        return [MixedBatch([next(labeled_iter) for _ in range(size)]) for _ in range(count)]
    half = max(1, size // 2)
    unlabeled_iter = RecyclingIterator(unlabeled, epoch_rng.child("unlabeled"))
    count = max(1, len(unlabeled) // half)
    return [make_mixed_batch(labeled_iter, unlabeled_iter, 2 * half) for _ in range(count)]
