"""Top-k accuracy on item-level pooled features and the InfoNCE information bound."""
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from cpcssl.autodiff import RngState, Tensor
from cpcssl.core.exceptions import DataError
from cpcssl.cpc.params import CpcConfig
from cpcssl.data.negatives import build_tasks
from cpcssl.data.samples import SequenceSample
from cpcssl.objectives.ccpc_ssl import CcpcParams, GumbelConfig, total_objective_ccpc
from cpcssl.objectives.classifier import classify
from cpcssl.objectives.cpc_ssl import CpcSslParams, total_objective_cpc
from cpcssl.objectives.supervised import pooled_codes

EVAL_CHUNK = 256


def group_samples(samples: Sequence[SequenceSample], limit: int = 0) -> List[List[SequenceSample]]:
    """Sequences of one image or document, ordered by group id; ``limit`` keeps the first groups."""
    grouped: Dict[int, List[SequenceSample]] = {}
    for sample in samples:
        grouped.setdefault(sample.group, []).append(sample)
    keys = sorted(grouped)
    if limit:
        keys = keys[:limit]
    return [grouped[k] for k in keys]


def item_scores(groups: Sequence[Sequence[SequenceSample]], params) -> np.ndarray:
    """``items×M`` class log-probabilities from features averaged over each item's sequences."""
    flat = [s for group in groups for s in group]
    pooled = []
    for start in range(0, len(flat), EVAL_CHUNK):
        pooled.append(pooled_codes(flat[start:start + EVAL_CHUNK], params.encoder).data)
    pooled = np.concatenate(pooled, axis=0)
    features, row = [], 0
    for group in groups:
        features.append(pooled[row:row + len(group)].mean(axis=0))
        row += len(group)
    return classify(Tensor(np.stack(features)), params.classifier).data


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, k_list: Sequence[int]) -> Dict[int, float]:
    """Hit iff the label is among the k largest scores; equal scores rank the lower class first."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return {k: float(np.mean([label in row[:k] for row, label in zip(order, labels)])) for k in k_list}


def evaluate_topk(samples: Sequence[SequenceSample], params, k_list: Sequence[int], limit: int = 0) -> Dict[int, float]:
    groups = group_samples(samples, limit)
    if not groups:
        raise DataError("evaluation set is empty")
    labels = []
    for group in groups:
        if group[0].label is None:
            raise DataError(f"evaluation item {group[0].group} has no label")
        labels.append(group[0].label)
    return topk_accuracy(item_scores(groups, params), np.asarray(labels), k_list)


def mi_lower_bound(mean_nce: float, n: int) -> float:
    """ln N - L_N."""
    if mean_nce < 0:
        raise ValueError(f"mean InfoNCE loss must be >= 0, got {mean_nce}")
    return math.log(n) - mean_nce


def mean_nce(samples: Sequence[SequenceSample], params, cpc: CpcConfig, rng: RngState, batch_size: int = 16,
             gumbel: Optional[GumbelConfig] = None) -> float:
    """Mean per-step InfoNCE loss over ``samples``, unlabeled, in batches with in-batch negatives."""
    if not isinstance(params, (CpcSslParams, CcpcParams)):
        raise DataError("InfoNCE evaluation needs a contrastive model")
    totals = []
    for start in range(0, len(samples), batch_size):
        batch = [s.without_label() for s in samples[start:start + batch_size]]
        if len(batch) * cpc.min_length < cpc.N:
            continue
        tasks = build_tasks(batch, cpc, rng.child(f"eval:{start}"))
        if isinstance(params, CcpcParams):
            result = total_objective_ccpc([], batch, tasks, params, rng, 0.0, gumbel or GumbelConfig())
        else:
            result = total_objective_cpc([], batch, tasks, params, rng, 0.0)
        totals.extend([float(np.mean(result.nce_per_step))] * len(batch))
    if not totals:
        raise DataError(f"not enough sequences to draw {cpc.N - 1} negatives")
    return float(np.mean(totals))
