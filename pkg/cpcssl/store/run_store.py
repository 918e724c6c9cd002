import hashlib
import json
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from cpcssl.core.config import CHECKPOINT_FILE, EFFECTIVE_CONFIG_FILE, EVAL_SUMMARY_FILE, METRICS_FILE, RUNS_DIR, logger
from cpcssl.core.exceptions import ConfigError
from cpcssl.models.config import ExperimentConfig
from cpcssl.models.runs import EvalResult, RunSummary
from cpcssl.training.trainer import Trainer, read_metrics

RUN_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def make_run_id(cfg: ExperimentConfig) -> str:
    """``<mode>-seed<seed>-<hash>``, the hash taken over the validated config."""
    digest = hashlib.sha1(cfg.model_dump_json().encode()).hexdigest()[:8]
    return f"{cfg.train.mode}-seed{cfg.train.seed}-{digest}"


def load_run_config(run_dir: Union[str, Path]) -> ExperimentConfig:
    path = Path(run_dir) / EFFECTIVE_CONFIG_FILE
    try:
        raw = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read effective config {path}: {exc}")
    return ExperimentConfig.model_validate(raw)


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint: Union[str, Path], out_dir: Union[str, Path],
                        k_list: Sequence[int]) -> Dict[int, float]:
    """Top-k accuracy of a saved model on the config's evaluation data; writes only the JSON summary."""
    trainer = Trainer(cfg, out_dir, write_files=False)
    trainer.load(checkpoint)
    accuracy = trainer.evaluate(k_list)
    trainer.write_eval_summary(accuracy)
    logger.info(f"Evaluated {checkpoint} at epoch {trainer.state.epoch}: {accuracy}")
    return accuracy


class RunStore:
    """
    Read access to the run directories under the storage root.
    Each run holds an effective config, a metrics file and a checkpoint.
    """

    def __init__(self, runs_dir: Union[str, Path] = RUNS_DIR):
        self.runs_dir = Path(runs_dir)

    def run_dir(self, run_id: str) -> Optional[Path]:
        """The run's directory, or None for unknown or malformed ids."""
        if not RUN_ID_PATTERN.match(run_id):
            logger.warning(f"Rejected run id {run_id!r}")
            return None
        path = self.runs_dir / run_id
        return path if path.is_dir() else None

    def fetch_run_list(self) -> List[RunSummary]:
        logger.info(f"Fetching runs from {self.runs_dir}")
        if not self.runs_dir.is_dir():
            return []
        runs = []
        for path in sorted(p for p in self.runs_dir.iterdir() if p.is_dir()):
            metrics = read_metrics(path / METRICS_FILE)
            mode = None
            if (path / EFFECTIVE_CONFIG_FILE).exists():
                mode = json.loads((path / EFFECTIVE_CONFIG_FILE).read_text()).get("train", {}).get("mode")
            runs.append(RunSummary(
                run_id=path.name,
                mode=mode,
                epochs_done=len(metrics),
                last_metrics=metrics[-1] if metrics else None,
                has_checkpoint=(path / CHECKPOINT_FILE).exists(),
            ))
        logger.info(f"Found {len(runs)} runs.")
        return runs

    def fetch_metrics(self, run_dir: Path) -> List[Dict]:
        logger.info(f"Fetching metrics for run {run_dir.name}")
        return read_metrics(run_dir / METRICS_FILE)

    def fetch_config(self, run_dir: Path) -> Dict:
        return load_run_config(run_dir).model_dump(mode="json")

    def evaluate(self, run_dir: Path, k_list: Sequence[int]) -> EvalResult:
        cfg = load_run_config(run_dir)
        accuracy = evaluate_checkpoint(cfg, run_dir / CHECKPOINT_FILE, run_dir, k_list)
        summary = json.loads((run_dir / EVAL_SUMMARY_FILE).read_text())
        return EvalResult(run_id=run_dir.name, epoch=summary["epoch"],
                          accuracy={str(k): v for k, v in accuracy.items()})
