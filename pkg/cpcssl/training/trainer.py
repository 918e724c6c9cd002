import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cpcssl.autodiff import RngState, Tape, backward
from cpcssl.core.config import (
    CHECKPOINT_FILE,
    EFFECTIVE_CONFIG_FILE,
    EVAL_SUMMARY_FILE,
    METRICS_FILE,
    SPLIT_MANIFEST_FILE,
    logger,
)
from cpcssl.core.exceptions import IncompatibleCheckpointError, NonFiniteLossError
from cpcssl.data.loader import LoadedData, load_experiment_data
from cpcssl.data.negatives import build_tasks
from cpcssl.data.samples import SequenceSample
from cpcssl.data.split import SplitResult, apply_manifest, split_labeled, write_manifest
from cpcssl.models.config import ExperimentConfig
from cpcssl.objectives.breakdown import LossBreakdown
from cpcssl.objectives.ccpc_ssl import CcpcParams, total_objective_ccpc
from cpcssl.objectives.cpc_ssl import total_objective_cpc
from cpcssl.objectives.supervised import supervised_objective
from cpcssl.training.batching import MixedBatch, epoch_batches
from cpcssl.training.checkpoint import Checkpoint, load_checkpoint, restore_params, save_checkpoint
from cpcssl.training.evaluate import evaluate_topk, mi_lower_bound
from cpcssl.training.model import MODE_CODES, MODE_NAMES, ModelParams, build_model
from cpcssl.training.optim import AdamState, adam_step


@dataclass
class TrainState:
    params: ModelParams
    adam: AdamState
    rng: RngState
    epoch: int = 0  # completed epochs
    step: int = 0


@dataclass(frozen=True)
class BatchWeights:
    """Scales on one batch's labeled bound sum and mean NLL.

    Summed over an epoch of ``|D_U|/(M/2)`` mixed batches, the weighted batch
    objectives estimate the dataset objective.
    """

    labeled: float = 1.0
    alpha: float = 0.0


def batch_weights(cfg: ExperimentConfig, n_labeled: int, n_unlabeled: int) -> BatchWeights:
    alpha = cfg.train.alpha or 0.0
    if not n_unlabeled:
        # labeled-only epochs: |D_L|/M batches of M labeled items
        return BatchWeights(1.0, alpha * cfg.train.batch_size / n_labeled)
    half = cfg.train.batch_size // 2
    if not cfg.ssl:
        # unlabeled halves are dropped; only alpha against the labeled sum matters
        return BatchWeights(1.0, alpha * half / n_labeled)
    return BatchWeights(n_labeled / n_unlabeled, alpha * half / n_unlabeled)


def batch_objective(batch: MixedBatch, params: ModelParams, cfg: ExperimentConfig, rng: RngState,
                    epoch: int, weights: Optional[BatchWeights] = None) -> LossBreakdown:
    """The mode's minimizable objective on one mixed batch; without ``weights`` alpha applies as configured."""
    if weights is None:
        weights = BatchWeights(1.0, cfg.train.alpha or 0.0)
    if cfg.train.mode == "supervised-only":
        return supervised_objective(batch.labeled, params, weights.alpha)
    tasks = build_tasks(batch.samples, cfg.cpc_config(), rng.child("tasks"))
    noise = rng.child("noise")
    if isinstance(params, CcpcParams):
        return total_objective_ccpc(batch.labeled, batch.unlabeled, tasks, params, noise, weights.alpha,
                                    cfg.gumbel(), epoch, labeled_weight=weights.labeled)
    return total_objective_cpc(batch.labeled, batch.unlabeled, tasks, params, noise, weights.alpha,
                               labeled_weight=weights.labeled)


def train_step(batch: MixedBatch, state: TrainState, cfg: ExperimentConfig,
               weights: Optional[BatchWeights] = None) -> Tuple[LossBreakdown, TrainState]:
    """Forward, reverse pass, Adam update; aborts on the first non-finite term."""
    step_rng = state.rng.child(f"step:{state.step}")
    named = state.params.named()
    with Tape() as tape:
        breakdown = batch_objective(batch, state.params, cfg, step_rng, state.epoch, weights)
    bad = breakdown.first_non_finite()
    if bad is not None:
        logger.error(f"Non-finite loss at step {state.step}: {bad[0]}={bad[1]}")
        raise NonFiniteLossError(bad[0], bad[1], state.step)
    grads = backward(tape, breakdown.objective, named)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            logger.error(f"Non-finite gradient at step {state.step}: {name}")
            raise NonFiniteLossError(f"grad:{name}", float("nan"), state.step)
    adam_step(named, grads, state.adam, cfg.train.learning_rate, cfg.train.weight_decay or 0.0)
    state.step += 1
    logger.debug(f"step {state.step} total={breakdown.total:.6f} cls={breakdown.cls_loss:.6f}")
    return breakdown, state


def epoch_metrics(epoch: int, results: Sequence[LossBreakdown], n: int, accuracy: Optional[Dict[int, float]],
                  tau: Optional[float], wall_ms: Optional[float]) -> Dict:
    nce = [float(np.mean(r.nce_per_step)) for r in results if r.nce_per_step]
    nce_mean = float(np.mean(nce)) if nce else None
    return {
        "epoch": epoch,
        "j_total": float(np.mean([r.total for r in results])),
        "nce_mean": nce_mean,
        "cls_loss": float(np.mean([r.cls_loss for r in results])),
        "mi_bound": mi_lower_bound(nce_mean, n) if nce_mean is not None else None,
        "top1": accuracy.get(1) if accuracy else None,
        "topk": {str(k): v for k, v in accuracy.items()} if accuracy else None,
        "tau": tau,
        "wall_ms": wall_ms,
    }


class Trainer:
    """
    Owns one run directory: data, split, parameters, optimizer state,
    metrics file and checkpoint.
    """

    def __init__(self, cfg: ExperimentConfig, run_dir: Union[str, Path], data: Optional[LoadedData] = None,
                 write_files: bool = True):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.data = data or load_experiment_data(cfg)
        self.split = self._split(cfg)
        self.cfg = cfg.resolve(len(self.split.labeled), len(self.split.unlabeled))
        self.weights = batch_weights(self.cfg, len(self.split.labeled), len(self.split.unlabeled))
        self.state = TrainState(build_model(self.cfg, self.data.train), AdamState(), RngState(self.cfg.train.seed))
        self.state.adam = AdamState.for_params(self.state.params.named())
        if write_files:
            self._write_run_files()

    @property
    def checkpoint_path(self) -> Path:
        return self.run_dir / CHECKPOINT_FILE

    @property
    def metrics_path(self) -> Path:
        return self.run_dir / METRICS_FILE

    @property
    def eval_samples(self) -> List[SequenceSample]:
        """Test files when configured, otherwise the unlabeled split with its retained labels."""
        if self.data.test is not None:
            return self.data.test.samples
        return self.split.retained

    def _split(self, cfg: ExperimentConfig) -> SplitResult:
        if cfg.data.split_manifest:
            logger.info(f"Loading split manifest from {cfg.data.split_manifest}")
            split = apply_manifest(self.data.train, cfg.data.split_manifest)
        else:
            split = split_labeled(self.data.train, cfg.data.labeled_fraction, RngState(cfg.train.seed),
                                  allow_full=cfg.train.mode == "supervised-only")
        if self.data.extra_unlabeled and cfg.ssl:
            split.unlabeled.extend(self.data.extra_unlabeled)
        return split

    def _write_run_files(self):
        effective = self.cfg.model_dump(mode="json")
        logger.info(f"Effective config: {json.dumps(effective, sort_keys=True)}")
        (self.run_dir / EFFECTIVE_CONFIG_FILE).write_text(json.dumps(effective, indent=2, sort_keys=True))
        write_manifest(self.run_dir / SPLIT_MANIFEST_FILE, self.split)

    def resume(self) -> bool:
        """Load the run's checkpoint if there is one; metrics after it are dropped."""
        if not self.checkpoint_path.exists():
            logger.warning(f"No checkpoint at {self.checkpoint_path}, starting from scratch")
            return False
        self.load(self.checkpoint_path)
        if self.metrics_path.exists():
            lines = self.metrics_path.read_text().splitlines()
            kept = [line for line in lines if json.loads(line)["epoch"] <= self.state.epoch]
            self.metrics_path.write_text("".join(line + "\n" for line in kept))
        logger.info(f"Resumed from epoch {self.state.epoch}, step {self.state.step}")
        return True

    def load(self, path: Union[str, Path]) -> None:
        ckpt = load_checkpoint(path)
        mode = MODE_CODES[self.cfg.train.mode]
        if ckpt.mode != mode:
            raise IncompatibleCheckpointError(
                f"checkpoint holds a {MODE_NAMES.get(ckpt.mode, ckpt.mode)} model, config asks for {self.cfg.train.mode}")
        named = self.state.params.named()
        restore_params(named, ckpt)
        self.state.adam = ckpt.adam
        self.state.rng = ckpt.rng
        self.state.epoch = ckpt.epoch
        self.state.step = ckpt.step

    def save(self) -> None:
        params = {name: p.data.copy() for name, p in self.state.params.named().items()}
        save_checkpoint(self.checkpoint_path, Checkpoint(MODE_CODES[self.cfg.train.mode], params, self.state.adam,
                                                         self.state.rng, self.state.epoch, self.state.step))

    def evaluate(self, k_list: Optional[Sequence[int]] = None) -> Dict[int, float]:
        k_list = list(k_list or self.cfg.train.k_list)
        return evaluate_topk(self.eval_samples, self.state.params, sorted(set([1, *k_list])), self.cfg.data.eval_count)

    def write_eval_summary(self, accuracy: Dict[int, float]) -> Path:
        path = self.run_dir / EVAL_SUMMARY_FILE
        summary = {"epoch": self.state.epoch, "mode": self.cfg.train.mode,
                   "accuracy": {str(k): v for k, v in accuracy.items()}}
        path.write_text(json.dumps(summary, indent=2))
        return path

    def run_epoch(self) -> Dict:
        cfg, state = self.cfg, self.state
        epoch = state.epoch
        unlabeled = self.split.unlabeled
        started = time.perf_counter()
        results = []
        for batch in epoch_batches(self.split.labeled, unlabeled, cfg.train.batch_size, state.rng, epoch):
            breakdown, state = train_step(batch, state, cfg, self.weights)
            results.append(breakdown)
        state.epoch = epoch + 1

        accuracy = None
        due = state.epoch % cfg.train.eval_every == 0 or state.epoch == cfg.train.epochs
        if due and self.eval_samples:
            accuracy = self.evaluate()
        tau = cfg.gumbel().at(epoch) if isinstance(state.params, CcpcParams) else None
        wall_ms = (time.perf_counter() - started) * 1e3 if cfg.train.record_wall_time else None
        metrics = epoch_metrics(state.epoch, results, cfg.model.N, accuracy, tau, wall_ms)
        with open(self.metrics_path, "a") as fh:
            fh.write(json.dumps(metrics) + "\n")
        top1 = "n/a" if metrics["top1"] is None else f"{metrics['top1']:.4f}"
        logger.info(f"Epoch {state.epoch}/{cfg.train.epochs}: J={metrics['j_total']:.4f} "
                    f"cls={metrics['cls_loss']:.4f} top1={top1}")
        if state.epoch % cfg.train.checkpoint_every == 0 or state.epoch == cfg.train.epochs:
            self.save()
        return metrics

    def run(self, resume: bool = False) -> List[Dict]:
        if resume:
            self.resume()
        elif self.metrics_path.exists():
            self.metrics_path.unlink()
        logger.info(f"Training {self.cfg.train.mode} for {self.cfg.train.epochs} epochs in {self.run_dir} "
                    f"({len(self.split.labeled)} labeled, {len(self.split.unlabeled)} unlabeled, "
                    f"alpha={self.cfg.train.alpha:g}, per batch {self.weights.alpha:.4g}, "
                    f"labeled weight {self.weights.labeled:.4g})")
        history = []
        while self.state.epoch < self.cfg.train.epochs:
            history.append(self.run_epoch())
        return history


def read_metrics(path: Union[str, Path]) -> List[Dict]:
    path = Path(path)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
