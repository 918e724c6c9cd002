import json
import math

import numpy as np
import pytest

from cpcssl.autodiff import RngState
from cpcssl.core.exceptions import ConfigError, DataError, ShapeError
from cpcssl.cpc.params import CpcConfig
from cpcssl.data.idx import read_idx_images, read_idx_labels, write_idx_images, write_idx_labels
from cpcssl.data.loader import load_experiment_data
from cpcssl.data.negatives import batch_pool, build_task, build_tasks, draw_negatives
from cpcssl.data.patches import PatchGridSpec, extract_patch_grid, images_to_sequences
from cpcssl.data.samples import SequenceDataset, SequenceSample
from cpcssl.data.split import apply_manifest, labeled_count, split_labeled, write_manifest
from cpcssl.data.synthetic import (
    SIGMA_GRID,
    SyntheticSpec,
    conditional_mi,
    make_synthetic_dataset,
    read_synthetic,
    truth_manifest,
    write_synthetic,
)
from cpcssl.data.text import UNK_ID, Vocabulary, build_text_sequences, parse_text_line, read_text_documents, tokenize
from cpcssl.verify.suites import tiny_config


def flat_dataset(count, length=5, classes=3):
    samples = [SequenceSample(np.full((length, 1, 1, 2), float(i)), i % classes, i) for i in range(count)]
    return SequenceDataset(samples, classes, "vision", (1, 1, 2))


class TestPatchGrid:
    def test_default_grid_side(self):
        spec = PatchGridSpec(28, 12, 4)
        assert spec.side == 5
        assert spec.overlap == 8

    @pytest.mark.parametrize("args", [(28, 12, 5), (28, 30, 4), (28, 4, 8)])
    def test_invalid_grids(self, args):
        with pytest.raises(ShapeError):
            PatchGridSpec(*args)

    def test_patch_covers_expected_pixels(self, gen):
        image = gen.integers(0, 256, size=(28, 28))
        spec = PatchGridSpec(28, 12, 4)
        grid = extract_patch_grid(image, spec)
        assert grid.shape == (5, 5, 1, 12, 12)
        np.testing.assert_array_equal(grid[2, 3, 0], image[8:20, 12:24])

    def test_column_sequences_share_group_and_label(self, gen):
        images = gen.integers(0, 256, size=(2, 28, 28)).astype(np.uint8)
        samples = images_to_sequences(images, np.array([4, 7]), PatchGridSpec(28, 12, 4))
        assert [s.id for s in samples] == list(range(10))
        assert [s.group for s in samples] == [0] * 5 + [1] * 5
        assert {s.label for s in samples[5:]} == {7}
        column = samples[6]
        assert column.patches.shape == (5, 1, 12, 12)
        np.testing.assert_allclose(column.patches[4, 0], images[1, 16:28, 4:16] / 255.0)

    def test_label_count_mismatch(self):
        with pytest.raises(DataError):
            images_to_sequences(np.zeros((2, 28, 28)), np.array([1]), PatchGridSpec(28, 12, 4))


class TestIdx:
    def test_write_then_read(self, tmp_path, gen):
        images = gen.integers(0, 256, size=(3, 6, 6)).astype(np.uint8)
        write_idx_images(tmp_path / "img", images)
        write_idx_labels(tmp_path / "lbl", np.array([0, 9, 3]))
        np.testing.assert_array_equal(read_idx_images(tmp_path / "img"), images)
        np.testing.assert_array_equal(read_idx_labels(tmp_path / "lbl"), [0, 9, 3])

    def test_bad_magic(self, tmp_path):
        write_idx_labels(tmp_path / "lbl", np.array([1, 2]))
        with pytest.raises(DataError, match="magic"):
            read_idx_images(tmp_path / "lbl")

    def test_truncated_payload(self, tmp_path):
        write_idx_images(tmp_path / "img", np.zeros((2, 4, 4), dtype=np.uint8))
        raw = (tmp_path / "img").read_bytes()
        (tmp_path / "img").write_bytes(raw[:-3])
        with pytest.raises(DataError):
            read_idx_images(tmp_path / "img")

    def test_labels_must_fit_u8(self, tmp_path):
        with pytest.raises(DataError):
            write_idx_labels(tmp_path / "lbl", np.array([300]))


class TestText:
    def test_tokenize(self):
        assert tokenize("Don't stop, NOW!") == ["don't", "stop", ",", "now", "!"]

    def test_vocabulary_keeps_most_frequent(self):
        vocab = Vocabulary.build([["a b a"], ["b c"]], size=2)
        assert vocab.tokens == ["<pad>", "<unk>", "a", "b"]
        np.testing.assert_array_equal(vocab.encode("a c z", 5), [2, UNK_ID, UNK_ID, 0, 0])
        assert len(vocab.encode("a b a b a b", 4)) == 4

    def test_parse_labeled_line(self):
        assert parse_text_line("2\tfirst one\tsecond\n", labeled=True) == (["first one", "second"], 2)
        assert parse_text_line("just\tsentences", labeled=False) == (["just", "sentences"], None)

    def test_bad_label(self):
        with pytest.raises(DataError):
            parse_text_line("x\tsentence", labeled=True)

    def test_short_document_repeats_last_sentence(self):
        vocab = Vocabulary.build([["x y"]], size=10)
        sample = build_text_sequences(["x", "x y"], 1, vocab, length=4, max_tokens=5, sample_id=7)
        assert sample.patches.shape == (4, 5)
        np.testing.assert_array_equal(sample.patches[3], sample.patches[1])
        assert sample.id == 7 and sample.label == 1

    def test_empty_document(self):
        with pytest.raises(DataError):
            build_text_sequences([], 0, Vocabulary.build([], 4), 3, 5, 0)

    def test_read_documents_skips_blank_lines(self, tmp_path):
        path = tmp_path / "docs.tsv"
        path.write_text("0\ta b\tc d\n\n1\te f\n", encoding="utf-8")
        docs = read_text_documents(path)
        assert [label for _, label in docs] == [0, 1]


class TestNegatives:
    def test_pool_dedups_recycled_samples(self):
        data = flat_dataset(2, length=3)
        pool = batch_pool([data.samples[0], data.samples[1], data.samples[0]])
        assert len(pool) == 6

    def test_tasks_exclude_positive_from_negatives(self):
        data = flat_dataset(4)
        cfg = CpcConfig(t=2, K=3, N=6, d_z=2, d_c=2)
        tasks = build_tasks(data.samples, cfg, RngState(1))
        for sample in data.samples:
            task = tasks[sample.id]
            assert task.context_indices == [0, 1]
            assert len(task.steps) == 3 and task.N == 6
            for k, step in enumerate(task.steps, start=1):
                assert step.positive == (sample.id, 1 + k)
                assert step.candidates[step.positive_index] == step.positive
                assert step.positive not in step.negative_refs
                assert len(set(step.candidates)) == 6

    def test_tasks_reproducible(self):
        data = flat_dataset(4)
        cfg = CpcConfig(t=2, K=2, N=4, d_z=2, d_c=2)
        first = build_tasks(data.samples, cfg, RngState(1))
        second = build_tasks(data.samples, cfg, RngState(1))
        assert first == second

    def test_pool_too_small(self, gen):
        with pytest.raises(DataError):
            draw_negatives([(0, 0), (0, 1)], (0, 0), 2, gen)

    def test_short_sample(self):
        data = flat_dataset(2, length=3)
        with pytest.raises(DataError):
            build_task(data.samples[0], batch_pool(data.samples), CpcConfig(t=2, K=2, N=3), RngState(0))


class TestSplit:
    @pytest.mark.parametrize("fraction,total,expected", [(0.25, 10, 3), (0.05, 10, 1), (0.15, 10, 2), (0.01, 10, 0)])
    def test_labeled_count_rounds_half_up(self, fraction, total, expected):
        assert labeled_count(fraction, total) == expected

    def test_split_hides_labels(self):
        data = flat_dataset(10)
        split = split_labeled(data, 0.3, RngState(5))
        assert len(split.labeled) == 3 and len(split.unlabeled) == 7
        assert all(s.label is None for s in split.unlabeled)
        assert all(split.hidden_labels[s.id] == s.id % 3 for s in split.unlabeled)
        assert split.rho == pytest.approx(7 / 3)

    def test_groups_move_together(self, gen):
        images = gen.integers(0, 256, size=(4, 28, 28)).astype(np.uint8)
        data = SequenceDataset(images_to_sequences(images, np.array([0, 1, 0, 1]), PatchGridSpec(28, 12, 4)),
                               2, "vision", (1, 12, 12))
        split = split_labeled(data, 0.5, RngState(2))
        assert len(split.labeled) == 10
        assert {s.group for s in split.labeled}.isdisjoint({s.group for s in split.unlabeled})

    def test_manifest_reproduces_split(self, tmp_path):
        data = flat_dataset(10)
        split = split_labeled(data, 0.3, RngState(5))
        write_manifest(tmp_path / "split.json", split)
        again = apply_manifest(data, tmp_path / "split.json")
        assert [s.id for s in again.labeled] == [s.id for s in split.labeled]
        assert json.loads((tmp_path / "split.json").read_text())["seed"] == 5

    def test_manifest_with_unknown_ids(self, tmp_path):
        (tmp_path / "split.json").write_text(json.dumps({"seed": 0, "fraction": 0.1, "labeled_ids": [99]}))
        with pytest.raises(DataError):
            apply_manifest(flat_dataset(5), tmp_path / "split.json")

    def test_fraction_bounds(self):
        with pytest.raises(ConfigError):
            split_labeled(flat_dataset(4), 1.0, RngState(0))
        assert len(split_labeled(flat_dataset(4), 1.0, RngState(0), allow_full=True).labeled) == 4
        with pytest.raises(DataError):
            split_labeled(flat_dataset(10), 0.01, RngState(0))


class TestSynthetic:
    def test_reproducible(self):
        spec = SyntheticSpec(num_classes=3, patch_dim=4)
        a = make_synthetic_dataset(spec, 6, RngState(3))
        b = make_synthetic_dataset(spec, 6, RngState(3))
        np.testing.assert_array_equal(a.samples[5].patches, b.samples[5].patches)
        assert a.samples[0].patches.shape == (spec.length, 1, 1, 4)

    def test_mi_falls_with_noise(self):
        manifest = truth_manifest(SyntheticSpec(patch_dim=6, latent=3))
        grid = np.asarray(manifest["mi_grid"])
        assert grid.shape == (len(SIGMA_GRID), 3)
        assert np.all(np.diff(grid, axis=0) <= 1e-12)
        assert np.all(grid[0] > 0)

    def test_noiseless_mi_is_infinite(self):
        assert math.isinf(conditional_mi(SyntheticSpec(), 1, 0.0))

    def test_emission_shape_checked(self):
        spec = SyntheticSpec(num_classes=2, latent=1, length=2, patch_dim=1, context=1, emission=[[[1.0, 0.0]]])
        with pytest.raises(ConfigError):
            spec.emission_matrix()

    def test_write_then_read(self, tmp_path):
        spec = SyntheticSpec(num_classes=4, patch_dim=3)
        write_synthetic(tmp_path, spec, 5, seed=2)
        data = read_synthetic(tmp_path)
        assert len(data) == 5 and data.num_classes == 4
        truth = json.loads((tmp_path / "truth.json").read_text())
        assert truth["context"] == 2 and len(truth["mi_given_label"]) == 3

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError):
            read_synthetic(tmp_path / "absent")


class TestLoader:
    def test_synthetic_config(self):
        loaded = load_experiment_data(tiny_config())
        assert len(loaded.train) == 48
        assert loaded.test is None
        assert loaded.train.num_classes == 3

    def test_idx_config(self, tmp_path, gen):
        write_idx_images(tmp_path / "img", gen.integers(0, 256, size=(3, 28, 28)).astype(np.uint8))
        write_idx_labels(tmp_path / "lbl", np.array([0, 1, 2]))
        cfg = tiny_config(data={"kind": "idx", "images": str(tmp_path / "img"), "labels": str(tmp_path / "lbl")})
        loaded = load_experiment_data(cfg)
        assert len(loaded.train) == 15
        assert loaded.train.patch_shape == (1, 12, 12)

    def test_text_config(self, tmp_path):
        (tmp_path / "train.tsv").write_text("0\ta b c d e\tf g h i j\n1\tk l m n o\n", encoding="utf-8")
        cfg = tiny_config(data={"kind": "text", "train_text": str(tmp_path / "train.tsv"), "max_tokens": 6})
        loaded = load_experiment_data(cfg)
        assert len(loaded.train) == 2
        assert loaded.train.samples[1].patches.shape == (4, 6)
        assert loaded.train.vocabulary[:2] == ["<pad>", "<unk>"]

    def test_unlabeled_text_joins_as_extra_pool(self, tmp_path):
        (tmp_path / "train.tsv").write_text("0\ta b c d e\tf g h i j\n1\tk l m n o\n", encoding="utf-8")
        (tmp_path / "test.tsv").write_text("1\ta b\n", encoding="utf-8")
        (tmp_path / "extra.tsv").write_text("7 zebra\tquokka\n\nnumbat wombat\n", encoding="utf-8")
        cfg = tiny_config(data={"kind": "text", "train_text": str(tmp_path / "train.tsv"),
                                "test_text": str(tmp_path / "test.tsv"),
                                "unlabeled_text": str(tmp_path / "extra.tsv"), "max_tokens": 6})
        loaded = load_experiment_data(cfg)
        assert len(loaded.train) == 2 and len(loaded.test) == 1
        assert [s.id for s in loaded.extra_unlabeled] == [3, 4]
        assert all(s.label is None for s in loaded.extra_unlabeled)
        assert "zebra" in loaded.train.vocabulary and "7" in loaded.train.vocabulary
        assert loaded.train.num_classes == 2
