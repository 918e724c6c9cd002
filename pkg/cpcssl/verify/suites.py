"""Property suites behind ``cpcssl verify``.

Each suite builds its own small models from fixed seeds and returns a
VerifyReport. ``quick`` shrinks sample counts and training length for smoke
runs; thresholds stay the same.
"""
import math
import tempfile
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from cpcssl.autodiff import RngState, Tensor, grad_check_report
from cpcssl.core.config import CHECKPOINT_FILE, METRICS_FILE, logger
from cpcssl.core.exceptions import ConfigError
from cpcssl.cpc.aggregator import ContextDistribution
from cpcssl.data.loader import LoadedData, synthetic_spec
from cpcssl.data.negatives import build_tasks
from cpcssl.data.patches import PatchGridSpec, images_to_sequences
from cpcssl.data.samples import ContrastiveTask, SequenceDataset, SequenceSample, StepTask
from cpcssl.data.synthetic import SIGMA_GRID, SyntheticSpec, conditional_mi, make_synthetic_dataset
from cpcssl.models.config import ExperimentConfig, check_constraints
from cpcssl.models.runs import VerifyReport
from cpcssl.objectives.ccpc_ssl import (
    GumbelConfig,
    ccpc_labeled_bound,
    ccpc_unlabeled_bound,
    ccpc_unlabeled_exact,
    total_objective_ccpc,
)
from cpcssl.objectives.cpc_ssl import CpcSslParams, cpc_forward, total_objective_cpc
from cpcssl.objectives.distributions import (
    categorical_entropy,
    gaussian_entropy,
    gaussian_log_density,
    gumbel_noise,
    gumbel_softmax_sample,
)
from cpcssl.training.complexity import TEST_RATIO_LIMIT, TOLERANCE, complexity_report
from cpcssl.training.evaluate import mean_nce
from cpcssl.training.model import build_model
from cpcssl.training.trainer import Trainer

GRAD_TOL = 1e-4
GRAD_EPS = 1e-5
GRAD_FLOOR = 1e-4
CHANCE_BAND = (0.9, 1.1)
NEAR_ONE_HOT = 0.99
ENUM_CHUNK = 100

TINY = {
    "data": {"kind": "synthetic", "synthetic_count": 48, "synthetic_classes": 3, "synthetic_latent": 2,
             "synthetic_patch_dim": 3, "synthetic_length": 4, "labeled_fraction": 0.25},
    "model": {"t": 2, "K": 2, "N": 3, "d_z": 4, "d_c": 3},
    "train": {"batch_size": 8, "epochs": 1, "alpha": 2.0},
}


def tiny_config(**sections: Dict) -> ExperimentConfig:
    """The tiny synthetic experiment with per-section overrides."""
    raw = {name: dict(values) for name, values in TINY.items()}
    for section, values in sections.items():
        raw.setdefault(section, {}).update(values)
    cfg = ExperimentConfig.model_validate(raw)
    check_constraints(cfg)
    return cfg


def tiny_setup(mode: str = "cpc", count: int = 8, **sections: Dict):
    """Resolved config, dataset and fresh parameters for ``mode``."""
    train = {"mode": mode, **sections.pop("train", {})}
    cfg = tiny_config(train=train, **sections)
    dataset = make_synthetic_dataset(synthetic_spec(cfg), count, RngState(cfg.train.seed).child("data"))
    cfg = cfg.resolve(1, 1)
    return cfg, dataset, build_model(cfg, dataset)


def _check_grads(report: VerifyReport, label: str, fn: Callable[[], Tensor], params) -> None:
    errors = grad_check_report(fn, params.named(), GRAD_EPS, GRAD_FLOOR)
    worst = max(errors, key=errors.get)
    report.add(f"grad {label}", errors[worst], GRAD_TOL, errors[worst] < GRAD_TOL, f"worst parameter {worst}")


def suite_gradients(quick: bool = False) -> VerifyReport:
    """Autodiff against central differences on every objective, noise frozen."""
    report = VerifyReport(suite="gradients")
    cfg, dataset, params = tiny_setup("cpc")
    batch = dataset.samples[:4]
    labeled, unlabeled = batch[:2], [s.without_label() for s in batch[2:]]
    tasks = build_tasks(batch, cfg.cpc_config(), RngState(1))
    _check_grads(report, "cpc total", lambda: total_objective_cpc(labeled, unlabeled, tasks, params,
                                                                  RngState(2), 2.0).objective, params)

    cfg, dataset, params = tiny_setup("ccpc")
    pool = {s.id: s for s in batch}
    gumbel = GumbelConfig(0.5, 1.0, 0.5)
    first, third = batch[0], batch[2]
    _check_grads(report, "ccpc labeled bound",
                 lambda: ccpc_labeled_bound(first, tasks[first.id], params, RngState(3), pool).objective, params)
    _check_grads(report, "ccpc unlabeled bound",
                 lambda: ccpc_unlabeled_bound(third, tasks[third.id], params, gumbel, RngState(4),
                                              pool=pool).objective, params)
    if not quick:
        _check_grads(report, "ccpc total",
                     lambda: total_objective_ccpc(labeled, unlabeled, tasks, params, RngState(5), 2.0,
                                                  gumbel).objective, params)
    return report


def suite_chance(quick: bool = False) -> VerifyReport:
    """Untrained scorers give near-uniform candidate scores, so L_N sits close to ln N."""
    report = VerifyReport(suite="chance")
    seeds = 5 if quick else 20
    n = 8
    ratios = []
    for seed in range(seeds):
        cfg, dataset, params = tiny_setup(
            "cpc", count=64,
            data={"synthetic_patch_dim": 8, "synthetic_length": 5},
            model={"t": 2, "K": 3, "N": n, "d_z": 16, "d_c": 16},
            train={"seed": seed},
        )
        nce = mean_nce(dataset.samples, params, cfg.cpc_config(), RngState(seed).child("chance"))
        ratios.append(nce / math.log(n))
    lo, hi = CHANCE_BAND
    mean = float(np.mean(ratios))
    report.add("mean L_N / ln N", mean, hi, lo <= mean <= hi, f"band [{lo}, {hi}] over {seeds} seeds")
    worst = max(ratios, key=lambda r: abs(r - 1.0))
    report.add("worst seed L_N / ln N", worst, hi, lo <= worst <= hi, f"min {min(ratios):.4f} max {max(ratios):.4f}")
    return report


def _within_se(report: VerifyReport, name: str, draws: np.ndarray, expected: float) -> None:
    se = float(draws.std(ddof=1) / math.sqrt(len(draws)))
    gap = abs(float(draws.mean()) - expected)
    report.add(name, gap, 3 * se, gap <= 3 * se, f"closed form {expected:.6f}, Monte Carlo {draws.mean():.6f}")


def suite_entropy(quick: bool = False) -> VerifyReport:
    """Closed-form entropies against -E[log q] over samples of q."""
    report = VerifyReport(suite="entropy")
    n = 10_000 if quick else 100_000
    rng = RngState(11)

    mu = np.array([0.3, -1.2, 2.0])
    log_var = np.array([0.0, np.log(4.0), -1.5])
    eps = rng.child("gaussian").normal((n, 3))
    c = mu + np.exp(0.5 * log_var) * eps
    log_q = gaussian_log_density(Tensor(c), Tensor(np.tile(mu, (n, 1))), Tensor(np.tile(log_var, (n, 1)))).data
    closed = gaussian_entropy(ContextDistribution(Tensor(mu), Tensor(log_var))).item()
    _within_se(report, "gaussian entropy D=3", -log_q, closed)

    probs = np.array([0.5, 0.25, 0.25])
    draws = rng.child("categorical").generator().choice(len(probs), size=n, p=probs)
    _within_se(report, "categorical entropy [0.5, 0.25, 0.25]", -np.log(probs[draws]), categorical_entropy(probs))
    return report


def relaxed_draws(probs: np.ndarray, tau: float, n: int, rng: RngState) -> np.ndarray:
    noise = gumbel_noise(rng, (n, len(probs)))
    return gumbel_softmax_sample(np.log(probs), tau, noise=noise).data


def suite_gumbel(quick: bool = False) -> VerifyReport:
    """The argmax of a relaxed sample is exactly categorical; low temperatures give near one-hot vectors."""
    report = VerifyReport(suite="gumbel")
    n = 10_000 if quick else 100_000
    root = RngState(12)
    for m in (3, 10):
        probs = root.child(f"target:{m}").generator().dirichlet(np.ones(m))
        for tau in (1.0, 0.1):
            freq = np.bincount(relaxed_draws(probs, tau, n, root.child(f"draws:{m}:{tau}")).argmax(axis=1),
                               minlength=m) / n
            z = np.abs(freq - probs) / np.sqrt(probs * (1 - probs) / n)
            report.add(f"argmax frequency M={m} tau={tau}", float(z.max()), 4.0, bool(z.max() <= 4.0),
                       "max |f - p| in units of sqrt(p(1-p)/n)")

    # misses scale with 1 - sum(p^2), so the target is a confident one
    probs = np.array([0.96, 0.02, 0.02])
    samples = relaxed_draws(probs, 0.01, n, root.child("sharp"))
    share = float(np.mean(samples.max(axis=1) > NEAR_ONE_HOT))
    report.add("tau=0.01 max coordinate > 0.99", share, 0.99, share >= 0.99, f"target {probs.tolist()}")
    return report


def copy_task(task: ContrastiveTask, new_id: int) -> ContrastiveTask:
    steps = [StepTask(s.positive, list(s.candidates), s.positive_index) for s in task.steps]
    return ContrastiveTask(new_id, list(task.context_indices), steps)


def suite_ccpc_enum(quick: bool = False, tau: float = 0.1) -> VerifyReport:
    """Relaxed-class estimate of the unlabeled bound against its exact sum over classes."""
    report = VerifyReport(suite="ccpc-enum")
    n_draws = 2_000 if quick else 10_000
    n_noise = 4096
    cfg, dataset, params = tiny_setup("ccpc", model={"init_scale": 0.2})
    batch = dataset.samples[:4]
    pool = {s.id: s for s in batch}
    tasks = build_tasks(batch, cfg.cpc_config(), RngState(21))
    sample, task = batch[0].without_label(), tasks[batch[0].id]
    exact = ccpc_unlabeled_exact(sample, task, params, RngState(22), n_noise, pool)

    gumbel = GumbelConfig(tau, 1.0, tau)
    base = max(pool) + 1
    chunk_means = []
    for start in range(0, n_draws, ENUM_CHUNK):
        copies = [SequenceSample(sample.patches, None, base + start + j, sample.group) for j in range(ENUM_CHUNK)]
        copy_tasks = {c.id: copy_task(task, c.id) for c in copies}
        result = total_objective_ccpc([], copies, copy_tasks, params, RngState(23), 0.0, gumbel, pool=pool)
        chunk_means.append(result.unlabeled_sum / len(copies))
    chunk_means = np.asarray(chunk_means)
    estimate = float(chunk_means.mean())
    se = float(chunk_means.std(ddof=1) / math.sqrt(len(chunk_means)))
    # the exact value carries its own context-noise error
    bound = 3 * se * math.sqrt(1 + n_draws / n_noise)
    gap = abs(estimate - exact)
    report.add(f"relaxed vs exact M={params.num_classes} tau={tau}", gap, bound, gap <= bound,
               f"exact {exact:.6f}, relaxed mean {estimate:.6f} over {n_draws} draws")
    return report


def shared_emission_spec(sigma: float, length: int) -> SyntheticSpec:
    """Every position uses the same emission map, so in-batch negatives come from the positive's marginal."""
    spec = SyntheticSpec(num_classes=10, latent=2, noise_sigma=sigma, length=length, patch_dim=4, context=2,
                         class_scale=0.0, emission_seed=31)
    one = spec.emission_matrix()[0]
    return spec.model_copy(update={"emission": np.tile(one, (length, 1, 1)).tolist()})


def per_step_nce(samples: List[SequenceSample], params: CpcSslParams, cfg: ExperimentConfig,
                 rng: RngState) -> np.ndarray:
    """``n×K`` InfoNCE losses over ``samples`` in batches with in-batch negatives."""
    size = cfg.train.batch_size
    rows = []
    for start in range(0, len(samples) - size + 1, size):
        batch = [s.without_label() for s in samples[start:start + size]]
        tasks = build_tasks(batch, cfg.cpc_config(), rng.child(f"eval:{start}"))
        nce, _ = cpc_forward(batch, tasks, params, rng)
        rows.append(nce.data)
    return np.concatenate(rows, axis=0)


def bound_estimates(sigma: float, count: int, held_out: int, epochs: int) -> List[Tuple[float, float, float]]:
    """(closed-form MI, ln N - mean InfoNCE, standard error) per step, for a cpc model trained at noise ``sigma``."""
    overrides = {
        "data": {"synthetic_classes": 10, "synthetic_latent": 2, "synthetic_patch_dim": 4, "synthetic_length": 5,
                 "synthetic_class_scale": 0.0, "labeled_fraction": 0.1},
        "model": {"t": 2, "K": 3, "N": 8, "d_z": 8, "d_c": 8},
        "train": {"mode": "cpc", "batch_size": 16, "epochs": epochs, "alpha": 0.0, "learning_rate": 3e-3},
    }
    cfg = tiny_config(**overrides)
    spec = shared_emission_spec(sigma, cfg.data.synthetic_length)
    train = make_synthetic_dataset(spec, count, RngState(41).child("data"))
    test = make_synthetic_dataset(spec, held_out, RngState(42).child("data"))
    with tempfile.TemporaryDirectory() as run_dir:
        trainer = Trainer(cfg, run_dir, LoadedData(train))
        trainer.run()
        nce = per_step_nce(test.samples, trainer.state.params, trainer.cfg, RngState(43))
    rows = []
    for k in range(nce.shape[1]):
        se = float(nce[:, k].std(ddof=1) / math.sqrt(len(nce)))
        rows.append((conditional_mi(spec, k + 1), math.log(cfg.model.N) - float(nce[:, k].mean()), se))
    return rows


def suite_bounds(quick: bool = False) -> VerifyReport:
    """Trained ln N - L_N stays below the closed-form information on a noise grid."""
    report = VerifyReport(suite="bounds")
    count, held_out, epochs = (256, 256, 2) if quick else (2048, 2048, 10)
    for sigma in SIGMA_GRID:
        for k, (truth, estimate, se) in enumerate(bound_estimates(sigma, count, held_out, epochs)):
            report.add(f"sigma={sigma} k={k + 1} bound <= MI", estimate, truth + 3 * se,
                       estimate <= truth + 3 * se, f"true MI {truth:.4f}")
            if not quick and truth > 0.5:
                report.add(f"sigma={sigma} k={k + 1} bound > 0", estimate, 0.0, estimate > 0.0,
                           f"true MI {truth:.4f}")
        logger.info(f"bounds: sigma={sigma} done")
    return report


def random_image_dataset(count: int, grid: PatchGridSpec, rng: RngState) -> SequenceDataset:
    gen = rng.generator()
    images = gen.integers(0, 256, size=(count, grid.image_size, grid.image_size), dtype=np.uint8)
    labels = gen.integers(0, 10, size=count)
    return SequenceDataset(images_to_sequences(images, labels, grid), 10, "vision", (1, grid.patch, grid.patch))


def suite_complexity(quick: bool = False) -> VerifyReport:
    """Instrumented multiply-accumulate counts against the per-unit cost formulas, default model."""
    report = VerifyReport(suite="complexity")
    cfg = ExperimentConfig().resolve(1, 1)
    grid = PatchGridSpec(cfg.data.image_size, cfg.data.patch, cfg.data.patch_stride)
    dataset = random_image_dataset(4, grid, RngState(51))
    params = build_model(cfg, dataset)
    batch_size = 4 if quick else cfg.train.batch_size
    result = complexity_report(params, dataset.samples, batch_size, cfg.model.N, RngState(52),
                               grid.image_size, grid.patch)
    report.add("train MACs vs formula", result.train_error, TOLERANCE, result.train_error <= TOLERANCE,
               f"measured {result.measured_train}, predicted {result.predicted_train + result.pooling_extra}; "
               f"shared encoding {result.shared_encoding_train}, scorer {result.measured_score}")
    report.add("SSL test MACs vs formula", result.test_error, TOLERANCE, result.test_error <= TOLERANCE,
               f"measured {result.measured_test_ssl}, predicted {result.predicted_test}")
    report.add("SSL test cost / supervised", result.test_ratio, TEST_RATIO_LIMIT,
               result.test_ratio <= TEST_RATIO_LIMIT,
               f"same patches without the aggregator {result.measured_test_supervised}; "
               f"overlapping patches cover the image {result.overlap_overhead:.2f} times and cost "
               f"{result.tiled_ratio:.2f}x a classifier over non-overlapping tiles")
    report.add("C_ag / C_enc", result.ag_to_enc, 0.1, result.ag_to_enc < 0.1,
               f"C_enc {result.c_enc}, C_ag {result.c_ag}")
    return report


def _train_tiny(run_dir: Path, cfg: ExperimentConfig, resume: bool = False) -> bytes:
    Trainer(cfg, run_dir).run(resume=resume)
    return (run_dir / METRICS_FILE).read_bytes()


def suite_determinism(quick: bool = False) -> VerifyReport:
    """Same config and seed give the same bytes; a resumed run matches an uninterrupted one."""
    report = VerifyReport(suite="determinism")
    modes = ("cpc",) if quick else ("cpc", "ccpc")
    for mode in modes:
        two = tiny_config(train={"mode": mode, "epochs": 2, "seed": 7})
        one = tiny_config(train={"mode": mode, "epochs": 1, "seed": 7})
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            first = _train_tiny(tmp / "a", two)
            second = _train_tiny(tmp / "b", two)
            report.add(f"{mode} repeat run metrics identical", float(first != second), 0.0, first == second)
            _train_tiny(tmp / "c", one)
            resumed = _train_tiny(tmp / "c", two, resume=True)
            report.add(f"{mode} resumed metrics identical", float(first != resumed), 0.0, first == resumed)
            same_ckpt = (tmp / "a" / CHECKPOINT_FILE).read_bytes() == (tmp / "c" / CHECKPOINT_FILE).read_bytes()
            report.add(f"{mode} resumed checkpoint identical", float(not same_ckpt), 0.0, same_ckpt)
    return report


GAIN_BATCH = 16


def gain_config(mode: str, fraction: float, seed: int, quick: bool) -> ExperimentConfig:
    """Ten classes whose signal persists along the sequence, buried under per-patch distractor noise.

    Every mode sees the same mixed batches, so the supervised baseline takes
    as many optimizer steps as the contrastive runs.
    """
    count = 1200 if quick else 3000
    epochs = 4 if quick else 12
    return tiny_config(
        data={"synthetic_count": count, "synthetic_classes": 10, "synthetic_latent": 1,
              "synthetic_patch_dim": 16, "synthetic_length": 5, "synthetic_noise": 0.5,
              "synthetic_class_scale": 2.0, "synthetic_distractor_dim": 96, "synthetic_distractor_sigma": 2.0,
              "labeled_fraction": fraction, "eval_count": 500},
        model={"t": 2, "K": 3, "N": 8, "d_z": 32, "d_c": 32},
        train={"mode": mode, "batch_size": GAIN_BATCH, "learning_rate": 2e-3, "epochs": epochs, "seed": seed,
               "alpha": None, "k_list": [1], "eval_every": epochs, "checkpoint_every": epochs},
    )


def mean_top1(mode: str, fraction: float, seeds: int, quick: bool) -> float:
    scores = []
    for seed in range(seeds):
        with tempfile.TemporaryDirectory() as run_dir:
            trainer = Trainer(gain_config(mode, fraction, seed, quick), run_dir)
            trainer.run()
            scores.append(trainer.evaluate([1])[1])
    return 100.0 * float(np.mean(scores))


def suite_ssl_gain(quick: bool = False) -> VerifyReport:
    """Few-label accuracy: contrastive pretraining against the encoder trained on labels alone."""
    report = VerifyReport(suite="ssl-gain")
    seeds = 2 if quick else 5
    results: Dict[float, Dict[str, float]] = {}
    for fraction in (0.01, 0.2):
        results[fraction] = {mode: mean_top1(mode, fraction, seeds, quick)
                             for mode in ("cpc", "supervised-only", "ccpc")}
        logger.info(f"ssl-gain: fraction={fraction} top-1 {results[fraction]}")
    low, high = results[0.01], results[0.2]
    gap_low = low["cpc"] - low["supervised-only"]
    gap_high = high["cpc"] - high["supervised-only"]
    report.add("1% labels: cpc - supervised (points)", gap_low, 5.0, gap_low >= 5.0, str(low))
    report.add("20% labels: cpc - supervised (points)", gap_high, 0.0, gap_high >= 0.0, str(high))
    for fraction, scores in results.items():
        parity = abs(scores["ccpc"] - scores["cpc"])
        report.add(f"{fraction:.0%} labels: |ccpc - cpc| (points)", parity, 3.0, parity <= 3.0)
    return report


SUITES: Dict[str, Callable[[bool], VerifyReport]] = {
    "gradients": suite_gradients,
    "chance": suite_chance,
    "entropy": suite_entropy,
    "gumbel": suite_gumbel,
    "ccpc-enum": suite_ccpc_enum,
    "bounds": suite_bounds,
    "complexity": suite_complexity,
    "determinism": suite_determinism,
    "ssl-gain": suite_ssl_gain,
}
SLOW_SUITES = ("ssl-gain",)


def suite_names() -> List[str]:
    return [*SUITES, "all"]


def run_suite(name: str, quick: bool = False) -> VerifyReport:
    """Run one suite, or every suite except the slow ones for ``all``."""
    if name == "all":
        merged = VerifyReport(suite="all")
        for key, suite in SUITES.items():
            if key in SLOW_SUITES:
                continue
            logger.info(f"Running verify suite {key}")
            merged.checks.extend(
                check.model_copy(update={"name": f"{key}: {check.name}"}) for check in suite(quick).checks)
        return merged
    suite: Optional[Callable[[bool], VerifyReport]] = SUITES.get(name)
    if suite is None:
        raise ConfigError(f"unknown verify suite {name!r}, expected one of {', '.join(suite_names())}", key="suite")
    logger.info(f"Running verify suite {name}{' (quick)' if quick else ''}")
    report = suite(quick)
    logger.info(f"Suite {name}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed")
    return report
