"""ccpc-SSL: class-conditional variational bounds with a Gumbel-Softmax relaxed class variable."""
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from cpcssl.autodiff import RngState, Tensor, ops
from cpcssl.core.exceptions import ConfigError, DataError
from cpcssl.cpc.aggregator import AggregatorParams, aggregate_context, sample_context
from cpcssl.cpc.encoder import EncoderParams
from cpcssl.cpc.params import NamedParams
from cpcssl.cpc.predictor import PredictorBank
from cpcssl.data.samples import ContrastiveTask, SequenceSample
from cpcssl.objectives.breakdown import LossBreakdown, column_means
from cpcssl.objectives.classifier import ClassifierParams, classify, per_sample_nll
from cpcssl.objectives.cpc_ssl import check_batches, context_noise_batch, mean_or_zero, split_rows
from cpcssl.objectives.distributions import (
    categorical_entropy,
    categorical_entropy_from_log_probs,
    gaussian_entropy,
    gaussian_log_density,
    gumbel_noise,
    gumbel_softmax_sample,
    temperature_at,
)
from cpcssl.objectives.forward import BatchCodes, build_index, check_lengths, encode_batch, nce_matrix


@dataclass(frozen=True)
class GumbelConfig:
    tau: float = 1.0
    anneal: float = 0.97
    tau_min: float = 0.1

    def __post_init__(self):
        if not self.tau_min > 0:
            raise ConfigError(f"tau_min must be > 0, got {self.tau_min}", key="ccpc.tau_min")
        if self.tau < self.tau_min:
            raise ConfigError(f"tau {self.tau} below tau_min {self.tau_min}", key="ccpc.tau")
        if not 0 < self.anneal <= 1:
            raise ConfigError(f"anneal must be in (0, 1], got {self.anneal}", key="ccpc.anneal")

    def at(self, epoch: int) -> float:
        return temperature_at(epoch, self.tau, self.anneal, self.tau_min)


def uniform_log_prior(num_classes: int) -> np.ndarray:
    return np.full(num_classes, -np.log(num_classes))


@dataclass
class CcpcParams:
    """Shared encoder and scorers, generative heads p(c|y,x) and inference heads q(c|y,z), classifier q(y|.)

    Both aggregators take the class vector as ``cond_dim = M`` extra head
    inputs. ``log_prior`` is fixed and never trained.
    """

    encoder: EncoderParams
    generative: AggregatorParams
    inference: AggregatorParams
    predictors: PredictorBank
    classifier: ClassifierParams
    t: int
    log_prior: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.log_prior is None:
            self.log_prior = uniform_log_prior(self.classifier.num_classes)
        pi = np.exp(self.log_prior)
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-9:
            raise ValueError(f"class prior must be strictly positive and sum to 1, got {pi}")

    @property
    def K(self) -> int:
        return self.predictors.K

    @property
    def num_classes(self) -> int:
        return self.classifier.num_classes

    def named(self) -> NamedParams:
        named = {}
        for part in (self.encoder, self.generative, self.inference, self.predictors, self.classifier):
            named.update(part.named())
        return named


@dataclass
class CcpcTerms:
    nce: Tensor          # B×K
    log_q_y: Tensor      # B×M
    log_density: Tensor  # B, log p(c | y, x)
    entropy_c: Tensor    # B, H(q(c | ., y))
    y: Tensor            # B×M


def class_vectors(targets: Sequence[SequenceSample], n_labeled: int, num_classes: int):
    onehot = np.zeros((len(targets), num_classes))
    unlabeled_mask = np.zeros((len(targets), 1))
    for i, sample in enumerate(targets):
        if i < n_labeled:
            if sample.label is None:
                raise DataError(f"sample {sample.id} has no label")
            onehot[i, sample.label] = 1.0
        else:
            unlabeled_mask[i] = 1.0
    return onehot, unlabeled_mask


def gumbel_noise_batch(rng: RngState, samples: Sequence[SequenceSample], num_classes: int) -> np.ndarray:
    return np.stack([gumbel_noise(rng.child(f"gumbel:{s.id}"), num_classes) for s in samples])


def conditioned_terms(context: Tensor, y: Tensor, params: CcpcParams, eps: np.ndarray):
    q = aggregate_context(context, params.inference, t=params.t, condition=y)
    c = sample_context(q, eps=eps)
    p = aggregate_context(context, params.generative, t=params.t, condition=y)
    return c, gaussian_log_density(c, p.mu, p.log_var), gaussian_entropy(q)


def ccpc_forward(targets: Sequence[SequenceSample], n_labeled: int, tasks: Mapping[int, ContrastiveTask],
                 params: CcpcParams, rng: RngState, tau: float,
                 pool: Optional[Mapping[int, SequenceSample]] = None, share: bool = True) -> CcpcTerms:
    """Labeled rows (the first ``n_labeled``) get their one-hot class; the rest a relaxed draw from q(y|.)."""
    check_lengths(targets, params.t, params.K)
    index = build_index(targets, tasks, pool)
    codes = encode_batch(index, params.encoder, share)
    log_q_y = classify(codes.pooled, params.classifier)

    onehot, unlabeled_mask = class_vectors(targets, n_labeled, params.num_classes)
    y = Tensor(onehot)
    if n_labeled < len(targets):
        relaxed = gumbel_softmax_sample(log_q_y, tau, noise=gumbel_noise_batch(rng, targets, params.num_classes))
        y = ops.add(ops.mul(relaxed, unlabeled_mask), onehot)

    eps = context_noise_batch(rng, targets, params.inference.d_c)
    c, log_density, entropy_c = conditioned_terms(codes.context, y, params, eps)
    return CcpcTerms(nce_matrix(c, codes, index, params.predictors), log_q_y, log_density, entropy_c, y)


def total_objective_ccpc(labeled: Sequence[SequenceSample], unlabeled: Sequence[SequenceSample],
                         tasks: Mapping[int, ContrastiveTask], params: CcpcParams, rng: RngState, alpha: float,
                         gumbel: GumbelConfig = GumbelConfig(), epoch: int = 0,
                         pool: Optional[Mapping[int, SequenceSample]] = None, share: bool = True,
                         labeled_weight: float = 1.0) -> LossBreakdown:
    """labeled_weight * sum(-L) + sum(-U) + alpha * mean NLL of the labels under q(y|.)."""
    check_batches(labeled, unlabeled, alpha, labeled_weight)
    labeled, unlabeled = list(labeled), list(unlabeled)
    n_labeled = len(labeled)
    terms = ccpc_forward(labeled + unlabeled, n_labeled, tasks, params, rng, gumbel.at(epoch), pool, share)

    # -L per labeled row and the part of -U shared with it
    rows = ops.sub(ops.sub(ops.sum(terms.nce, axis=1), terms.log_density), terms.entropy_c)
    rows_labeled, rows_unlabeled = split_rows(rows, n_labeled)
    _, log_q_unlabeled = split_rows(terms.log_q_y, n_labeled)
    _, y_unlabeled = split_rows(terms.y, n_labeled)
    log_prior = ops.sum(ops.mul(y_unlabeled, params.log_prior), axis=1)
    entropy_y = categorical_entropy_from_log_probs(log_q_unlabeled)

    nll = per_sample_nll(ops.index(terms.log_q_y, slice(0, n_labeled)), [s.label for s in labeled])
    labeled_sum = ops.sum(rows_labeled)
    unlabeled_sum = ops.sum(ops.sub(ops.sub(rows_unlabeled, log_prior), entropy_y))
    cls_loss = mean_or_zero(nll)
    objective = ops.add(ops.add(ops.mul(labeled_sum, labeled_weight), unlabeled_sum), ops.mul(cls_loss, alpha))
    entropy_terms = {
        "gaussian": float(terms.entropy_c.data.mean()),
        "categorical": float(entropy_y.data.mean()) if unlabeled else 0.0,
        "log_prior": float(log_prior.data.mean()) if unlabeled else 0.0,
        "log_density": float(terms.log_density.data.mean()),
    }
    return LossBreakdown(objective, column_means(terms.nce), cls_loss.item(), alpha,
                         labeled_sum.item(), unlabeled_sum.item(), entropy_terms, labeled_weight)


def ccpc_labeled_bound(sample: SequenceSample, task: ContrastiveTask, params: CcpcParams, rng: RngState,
                       pool: Optional[Mapping[int, SequenceSample]] = None) -> LossBreakdown:
    """-L: step losses minus log p(c|y,x) minus H(q(c|.,y)) at one reparameterised c, y given."""
    if sample.label is None:
        raise DataError(f"sample {sample.id} has no label")
    result = total_objective_ccpc([sample], [], {sample.id: task}, params, rng, 0.0, pool=pool)
    result.cls_loss = 0.0
    return result


def ccpc_unlabeled_bound(sample: SequenceSample, task: ContrastiveTask, params: CcpcParams, gumbel: GumbelConfig,
                         rng: RngState, epoch: int = 0,
                         pool: Optional[Mapping[int, SequenceSample]] = None) -> LossBreakdown:
    """-U with a relaxed class draw: adds the prior term y.log(pi) and H(q(y|.))."""
    return total_objective_ccpc([], [sample.without_label()], {sample.id: task}, params, rng, 0.0,
                                gumbel, epoch, pool)


def ccpc_unlabeled_exact(sample: SequenceSample, task: ContrastiveTask, params: CcpcParams, rng: RngState,
                         n_noise: int = 1, pool: Optional[Mapping[int, SequenceSample]] = None) -> float:
    """-U with the class summed out exactly; the context expectation uses ``n_noise`` draws."""
    if n_noise < 1:
        raise ValueError(f"n_noise must be >= 1, got {n_noise}")
    check_lengths([sample], params.t, params.K)
    index = build_index([sample], {sample.id: task}, pool)
    codes = encode_batch(index, params.encoder)
    q_y = np.exp(classify(codes.pooled, params.classifier).data[0])

    eps = rng.child(f"exact:{sample.id}").normal((n_noise, params.inference.d_c))
    repeated = BatchCodes(
        Tensor(np.repeat(codes.context.data, n_noise, axis=0)),
        Tensor(np.repeat(codes.candidates.data, n_noise, axis=0)),
        codes.pooled,
    )
    repeated_index = replace(index, positive_index=np.repeat(index.positive_index, n_noise, axis=0))

    per_class = np.zeros(params.num_classes)
    for y in range(params.num_classes):
        condition = np.zeros((n_noise, params.num_classes))
        condition[:, y] = 1.0
        c, log_density, entropy_c = conditioned_terms(repeated.context, Tensor(condition), params, eps)
        nce = nce_matrix(c, repeated, repeated_index, params.predictors).data.sum(axis=1)
        per_class[y] = (nce - log_density.data - entropy_c.data).mean() - params.log_prior[y]
    return float(q_y @ per_class - categorical_entropy(q_y / q_y.sum()))
