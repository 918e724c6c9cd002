from cpcssl.training.batching import MixedBatch, RecyclingIterator, epoch_batches, make_mixed_batch
from cpcssl.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from cpcssl.training.complexity import ComplexityReport, complexity_report
from cpcssl.training.evaluate import evaluate_topk, mi_lower_bound
from cpcssl.training.model import build_model
from cpcssl.training.optim import AdamState, adam_step
from cpcssl.training.trainer import BatchWeights, Trainer, TrainState, batch_weights, train_step

__all__ = [
    "AdamState",
    "BatchWeights",
    "Checkpoint",
    "ComplexityReport",
    "MixedBatch",
    "RecyclingIterator",
    "TrainState",
    "Trainer",
    "adam_step",
    "batch_weights",
    "build_model",
    "complexity_report",
    "epoch_batches",
    "evaluate_topk",
    "load_checkpoint",
    "make_mixed_batch",
    "mi_lower_bound",
    "save_checkpoint",
    "train_step",
]
