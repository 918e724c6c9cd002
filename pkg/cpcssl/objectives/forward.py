"""Shared encoding pass: turns a minibatch and its contrastive tasks into code tensors."""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from cpcssl.autodiff import Tensor, ops
from cpcssl.core.exceptions import DataError
from cpcssl.cpc.encoder import EncoderParams
from cpcssl.cpc.predictor import PredictorBank, nce_from_scores, pool_features, step_scores
from cpcssl.data.samples import ContrastiveTask, SequenceSample


@dataclass
class TaskIndex:
    """Row indices into the stacked patches of the pool."""

    patches: np.ndarray          # all pool patches, stacked
    sequence_rows: np.ndarray    # B×T
    context_rows: np.ndarray     # B×t
    candidate_rows: np.ndarray   # B×K×N
    positive_index: np.ndarray   # B×K


@dataclass
class BatchCodes:
    context: Tensor      # B×t×D_z
    candidates: Tensor   # B×K×N×D_z
    pooled: Tensor       # B×D_z


def build_index(targets: Sequence[SequenceSample], tasks: Mapping[int, ContrastiveTask],
                pool: Optional[Mapping[int, SequenceSample]] = None) -> TaskIndex:
    members: Dict[int, SequenceSample] = {s.id: s for s in targets}
    for sid, sample in (pool or {}).items():
        members.setdefault(sid, sample)

    offsets: Dict[int, int] = {}
    blocks: List[np.ndarray] = []
    row = 0
    for sid, sample in members.items():
        offsets[sid] = row
        blocks.append(np.asarray(sample.patches))
        row += sample.length

    def resolve(ref):
        sid, pos = ref
        if sid not in offsets:
            raise DataError(f"task references sample {sid}, which is not in the batch pool")
        if not 0 <= pos < members[sid].length:
            raise DataError(f"task references position {pos} outside sample {sid} of length {members[sid].length}")
        return offsets[sid] + pos

    sequence_rows, context_rows, candidate_rows, positive_index = [], [], [], []
    for sample in targets:
        task = tasks.get(sample.id)
        if task is None:
            raise DataError(f"no contrastive task for sample {sample.id}")
        sequence_rows.append([offsets[sample.id] + i for i in range(sample.length)])
        context_rows.append([offsets[sample.id] + i for i in task.context_indices])
        candidate_rows.append([[resolve(ref) for ref in step.candidates] for step in task.steps])
        positive_index.append([step.positive_index for step in task.steps])

    lengths = {len(rows) for rows in sequence_rows}
    if len(lengths) > 1:
        raise DataError(f"sequences in one batch must share a length, got {sorted(lengths)}")
    return TaskIndex(
        np.concatenate(blocks, axis=0),
        np.asarray(sequence_rows, dtype=np.int64),
        np.asarray(context_rows, dtype=np.int64),
        np.asarray(candidate_rows, dtype=np.int64),
        np.asarray(positive_index, dtype=np.int64),
    )


def encode_batch(index: TaskIndex, encoder: EncoderParams, share: bool = True) -> BatchCodes:
    """Encode what the tasks need.

    With ``share`` every pool position is encoded once and gathered; otherwise
    each context row and each candidate is encoded on its own, which is the
    cost model M(NK+t)C_enc.
    """
    batch, t = index.context_rows.shape
    _, K, N = index.candidate_rows.shape
    if share:
        codes = encoder.encode(index.patches)
        context = ops.take(codes, index.context_rows)
        candidates = ops.take(codes, index.candidate_rows)
        pooled = pool_features(ops.take(codes, index.sequence_rows))
        return BatchCodes(context, candidates, pooled)

    d_z = encoder.d_z
    context = ops.reshape(encoder.encode(index.patches[index.context_rows.reshape(-1)]), (batch, t, d_z))
    candidates = ops.reshape(encoder.encode(index.patches[index.candidate_rows.reshape(-1)]), (batch, K, N, d_z))
    flat_positive = (np.arange(batch * K) * N + index.positive_index.reshape(-1))
    positives = ops.reshape(ops.take(ops.reshape(candidates, (batch * K * N, d_z)), flat_positive), (batch, K, d_z))
    parts = [context, positives]
    extra = index.sequence_rows[:, t + K:]
    if extra.size:
        parts.append(ops.reshape(encoder.encode(index.patches[extra.reshape(-1)]), (batch, extra.shape[1], d_z)))
    return BatchCodes(context, candidates, pool_features(ops.concat(parts, axis=1)))


def nce_matrix(c: Tensor, codes: BatchCodes, index: TaskIndex, predictors: PredictorBank) -> Tensor:
    """B×K matrix of InfoNCE step losses."""
    batch = c.shape[0]
    columns = []
    for k, w_k in enumerate(predictors.weights):
        scores = step_scores(c, ops.index(codes.candidates, (slice(None), k)), w_k)
        columns.append(ops.reshape(nce_from_scores(scores, index.positive_index[:, k]), (batch, 1)))
    return ops.concat(columns, axis=1)


def check_lengths(samples: Sequence[SequenceSample], t: int, K: int) -> None:
    for sample in samples:
        if sample.length < t + K:
            raise DataError(f"sample {sample.id} has {sample.length} patches, needs at least t+K={t + K}")
