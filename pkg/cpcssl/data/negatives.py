"""In-batch negative sampling and contrastive task construction."""
from typing import Dict, List, Sequence

import numpy as np

from cpcssl.autodiff import RngState
from cpcssl.core.exceptions import DataError
from cpcssl.cpc.params import CpcConfig
from cpcssl.data.samples import ContrastiveTask, PatchRef, SequenceSample, StepTask


def batch_pool(samples: Sequence[SequenceSample]) -> List[PatchRef]:
    """Every (sample id, position) of the minibatch, in batch order; recycled duplicates count once."""
    unique = {s.id: s for s in samples}
    return [(sid, pos) for sid, s in unique.items() for pos in range(s.length)]


def draw_negatives(pool: Sequence[PatchRef], positive: PatchRef, n_neg: int, gen: np.random.Generator) -> List[PatchRef]:
    """Uniform draw without replacement from ``pool`` minus the positive itself."""
    eligible = [ref for ref in pool if ref != positive]
    if len(eligible) < n_neg:
        raise DataError(f"negative pool holds {len(eligible)} eligible patches, need {n_neg}")
    chosen = gen.choice(len(eligible), size=n_neg, replace=False)
    return [eligible[i] for i in chosen]


def build_task(sample: SequenceSample, pool: Sequence[PatchRef], cfg: CpcConfig, rng: RngState) -> ContrastiveTask:
    """Context = first t positions; step k predicts position t+k-1 among N shuffled candidates."""
    if sample.length < cfg.min_length:
        raise DataError(f"sample {sample.id} has {sample.length} patches, needs at least t+K={cfg.min_length}")
    gen = rng.child(f"task:{sample.id}").generator()
    task = ContrastiveTask(sample.id, list(range(cfg.t)))
    for k in range(1, cfg.K + 1):
        positive = (sample.id, cfg.t + k - 1)
        negatives = draw_negatives(pool, positive, cfg.N - 1, gen)
        d = int(gen.integers(cfg.N))
        task.steps.append(StepTask(positive, negatives[:d] + [positive] + negatives[d:], d))
    return task


def build_tasks(samples: Sequence[SequenceSample], cfg: CpcConfig, rng: RngState) -> Dict[int, ContrastiveTask]:
    pool = batch_pool(samples)
    return {s.id: build_task(s, pool, cfg, rng) for s in samples}
