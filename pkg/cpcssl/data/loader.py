"""Turns the [data] section of an experiment config into train and evaluation datasets."""
from dataclasses import dataclass, field
from typing import List, Optional

from cpcssl.autodiff import RngState
from cpcssl.core.config import logger
from cpcssl.core.exceptions import DataError
from cpcssl.data.idx import read_idx_images, read_idx_labels
from cpcssl.data.patches import PatchGridSpec, images_to_sequences
from cpcssl.data.samples import SequenceDataset, SequenceSample
from cpcssl.data.synthetic import SyntheticSpec, make_synthetic_dataset, read_synthetic
from cpcssl.data.text import Document, Vocabulary, build_text_sequences, read_text_documents
from cpcssl.models.config import ExperimentConfig


@dataclass
class LoadedData:
    train: SequenceDataset
    test: Optional[SequenceDataset] = None
    extra_unlabeled: List[SequenceSample] = field(default_factory=list)  # join the unlabeled split as is


def synthetic_spec(cfg: ExperimentConfig) -> SyntheticSpec:
    d = cfg.data
    return SyntheticSpec(num_classes=d.synthetic_classes, latent=d.synthetic_latent, noise_sigma=d.synthetic_noise,
                         length=d.synthetic_length, patch_dim=d.synthetic_patch_dim, context=cfg.model.t,
                         class_scale=d.synthetic_class_scale, distractor_dim=d.synthetic_distractor_dim,
                         distractor_sigma=d.synthetic_distractor_sigma)


def _limit(dataset: SequenceDataset, max_items: Optional[int]) -> SequenceDataset:
    if not max_items:
        return dataset
    keep = set(sorted(dataset.groups())[:max_items])
    return dataset.with_samples([s for s in dataset.samples if s.group in keep])


def _load_idx(images_path: str, labels_path: str, grid: PatchGridSpec, max_items: Optional[int]) -> SequenceDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if max_items:
        images, labels = images[:max_items], labels[:max_items]
    if len(images) != len(labels):
        raise DataError(f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    num_classes = int(labels.max()) + 1 if len(labels) else 0
    return SequenceDataset(images_to_sequences(images, labels, grid), max(num_classes, 2), "vision",
                           (1, grid.patch, grid.patch))


def _text_samples(documents: List[Document], vocab: Vocabulary, cfg: ExperimentConfig,
                  first_id: int) -> List[SequenceSample]:
    if cfg.data.max_items:
        documents = documents[:cfg.data.max_items]
    length = cfg.model.t + cfg.model.K
    return [build_text_sequences(sentences, label, vocab, length, cfg.data.max_tokens, first_id + i)
            for i, (sentences, label) in enumerate(documents)]


def _load_text(path: str, vocab: Vocabulary, cfg: ExperimentConfig, first_id: int = 0) -> SequenceDataset:
    samples = _text_samples(read_text_documents(path, labeled=True), vocab, cfg, first_id)
    labels = [s.label for s in samples]
    return SequenceDataset(samples, max(max(labels) + 1, 2), "text", (cfg.data.max_tokens,), vocab.tokens)


def load_experiment_data(cfg: ExperimentConfig) -> LoadedData:
    d = cfg.data
    if d.kind == "synthetic":
        if d.synthetic_dir:
            train = _limit(read_synthetic(d.synthetic_dir), d.max_items)
        else:
            train = make_synthetic_dataset(synthetic_spec(cfg), d.synthetic_count, RngState(cfg.train.seed).child("data"))
        loaded = LoadedData(train)
    elif d.kind == "idx":
        grid = PatchGridSpec(d.image_size, d.patch, d.patch_stride)
        test = None
        if d.test_images and d.test_labels:
            test = _load_idx(d.test_images, d.test_labels, grid, d.max_items)
        loaded = LoadedData(_load_idx(d.images, d.labels, grid, d.max_items), test)
    else:
        documents = read_text_documents(d.train_text, labeled=True)
        extra = read_text_documents(d.unlabeled_text, labeled=False) if d.unlabeled_text else []
        vocab = Vocabulary.build((sentences for sentences, _ in documents + extra), d.vocab_size)
        train = _load_text(d.train_text, vocab, cfg)
        test = _load_text(d.test_text, vocab, cfg, first_id=len(train)) if d.test_text else None
        first_extra = len(train) + (len(test) if test else 0)
        loaded = LoadedData(train, test, _text_samples(extra, vocab, cfg, first_extra))

    if loaded.test is not None and loaded.test.num_classes > loaded.train.num_classes:
        loaded.train.num_classes = loaded.test.num_classes
    logger.info(f"Loaded {d.kind} data: {len(loaded.train)} training sequences, "
                f"{len(loaded.test) if loaded.test else 0} test sequences, "
                f"{len(loaded.extra_unlabeled)} extra unlabeled sequences, {loaded.train.num_classes} classes")
    return loaded
