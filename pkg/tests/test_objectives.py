import math

import numpy as np
import pytest

from cpcssl.autodiff import RngState, Tensor
from cpcssl.core.exceptions import ConfigError, DataError
from cpcssl.cpc.aggregator import ContextDistribution
from cpcssl.data.negatives import build_tasks
from cpcssl.data.samples import SequenceSample
from cpcssl.objectives.ccpc_ssl import (
    GumbelConfig,
    ccpc_labeled_bound,
    ccpc_unlabeled_bound,
    ccpc_unlabeled_exact,
    total_objective_ccpc,
)
from cpcssl.objectives.classifier import classification_loss
from cpcssl.objectives.cpc_ssl import labeled_loss_cpc, total_objective_cpc, unlabeled_loss_cpc
from cpcssl.objectives.distributions import (
    categorical_entropy,
    gaussian_entropy,
    gaussian_log_density,
    gumbel_noise,
    gumbel_softmax_sample,
    temperature_at,
)
from cpcssl.objectives.supervised import supervised_objective
from cpcssl.verify.suites import tiny_setup


def batch_and_tasks(cfg, dataset, size=4):
    batch = dataset.samples[:size]
    return batch, build_tasks(batch, cfg.cpc_config(), RngState(11)), {s.id: s for s in batch}


class TestDistributions:
    def test_gaussian_entropy_closed_form(self):
        dist = ContextDistribution(Tensor(np.zeros(1)), Tensor(np.zeros(1)))
        assert gaussian_entropy(dist).item() == pytest.approx(1.41894, abs=1e-5)
        wide = ContextDistribution(Tensor(np.zeros(3)), Tensor(np.log(np.array([1.0, 4.0, 0.25]))))
        assert gaussian_entropy(wide).item() == pytest.approx(3 * 1.4189385332, abs=1e-9)

    def test_gaussian_log_density_at_mean(self):
        value = gaussian_log_density(Tensor(np.zeros(2)), Tensor(np.zeros(2)), Tensor(np.zeros(2))).item()
        assert value == pytest.approx(-math.log(2 * math.pi))

    def test_categorical_entropy(self):
        assert categorical_entropy(np.full(4, 0.25)) == pytest.approx(math.log(4))
        assert categorical_entropy(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.0397208, abs=1e-6)
        assert categorical_entropy(np.array([1.0, 0.0])) == 0.0

    def test_categorical_entropy_rejects_non_simplex(self):
        with pytest.raises(ValueError):
            categorical_entropy(np.array([0.5, 0.6]))

    def test_gumbel_softmax_on_simplex(self):
        sample = gumbel_softmax_sample(np.log(np.array([0.2, 0.3, 0.5])), 0.5, rng=RngState(4)).data
        assert sample.sum() == pytest.approx(1.0)
        assert np.all(sample > 0)

    def test_gumbel_low_temperature_near_one_hot(self):
        log_probs = np.log(np.array([0.98, 0.01, 0.01]))
        sample = gumbel_softmax_sample(log_probs, 0.01, noise=np.zeros(3)).data
        assert sample[0] > 0.999

    def test_gumbel_tau_must_be_positive(self):
        with pytest.raises(ValueError):
            gumbel_softmax_sample(np.zeros(3), 0.0, rng=RngState(1))

    def test_gumbel_noise_reproducible(self):
        np.testing.assert_array_equal(gumbel_noise(RngState(5), 6), gumbel_noise(RngState(5), 6))

    def test_temperature_schedule(self):
        assert temperature_at(0, 1.0, 0.97, 0.1) == 1.0
        assert temperature_at(2, 1.0, 0.97, 0.1) == pytest.approx(0.9409)
        assert temperature_at(200, 1.0, 0.97, 0.1) == 0.1

    def test_gumbel_config_validation(self):
        assert GumbelConfig().at(1) == pytest.approx(0.97)
        with pytest.raises(ConfigError):
            GumbelConfig(tau=0.05, tau_min=0.1)
        with pytest.raises(ConfigError):
            GumbelConfig(anneal=1.5)


class TestCpcObjective:
    def test_bookkeeping(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        result = total_objective_cpc(batch[:2], [s.without_label() for s in batch[2:]], tasks, params,
                                     RngState(2), alpha=2.0)
        assert result.check_bookkeeping()
        assert len(result.nce_per_step) == cfg.model.K
        assert result.first_non_finite() is None

    def test_per_sample_terms_add_up(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        rng = RngState(2)
        total = total_objective_cpc(batch[:2], [], tasks, params, rng, alpha=0.0, pool=pool).total
        parts = sum(labeled_loss_cpc(s, tasks[s.id], params, rng, pool).total for s in batch[:2])
        assert total == pytest.approx(parts, rel=1e-10)

    def test_batch_order_does_not_matter(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        forward = total_objective_cpc(batch[:2], batch[2:], tasks, params, RngState(2), 1.0, pool=pool)
        backward = total_objective_cpc(batch[1::-1], batch[:1:-1], tasks, params, RngState(2), 1.0, pool=pool)
        assert forward.total == pytest.approx(backward.total, rel=1e-10)

    def test_shared_encoding_matches_per_candidate(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        shared = total_objective_cpc(batch[:2], batch[2:], tasks, params, RngState(2), 1.0, share=True)
        separate = total_objective_cpc(batch[:2], batch[2:], tasks, params, RngState(2), 1.0, share=False)
        assert shared.total == pytest.approx(separate.total, rel=1e-10)

    def test_unlabeled_only_has_no_classification_loss(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        result = total_objective_cpc([], batch, tasks, params, RngState(2), alpha=5.0)
        assert result.cls_loss == 0.0
        assert result.labeled_sum == 0.0
        assert result.check_bookkeeping()

    def test_unlabeled_loss_ignores_label(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        sample = batch[0]
        with_label = unlabeled_loss_cpc(sample, tasks[sample.id], params, RngState(2), pool)
        without = unlabeled_loss_cpc(sample.without_label(), tasks[sample.id], params, RngState(2), pool)
        assert with_label.total == without.total
        assert with_label.cls_loss == 0.0

    def test_labeled_weight_scales_labeled_sum_only(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        unlabeled = [s.without_label() for s in batch[2:]]
        plain = total_objective_cpc(batch[:2], unlabeled, tasks, params, RngState(2), alpha=2.0)
        weighted = total_objective_cpc(batch[:2], unlabeled, tasks, params, RngState(2), alpha=2.0,
                                       labeled_weight=0.25)
        assert weighted.check_bookkeeping()
        assert weighted.labeled_sum == pytest.approx(plain.labeled_sum, rel=1e-12)
        expected = 0.25 * plain.labeled_sum + plain.unlabeled_sum + 2.0 * plain.cls_loss
        assert weighted.total == pytest.approx(expected, rel=1e-10)

    def test_negative_labeled_weight_rejected(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        with pytest.raises(ConfigError):
            total_objective_cpc(batch, [], tasks, params, RngState(2), alpha=1.0, labeled_weight=-0.5)

    @pytest.mark.parametrize("seed", range(20))
    def test_initial_labeled_loss_near_symmetric_value(self, seed):
        cfg, dataset, params = tiny_setup("cpc", train={"seed": seed})
        batch = dataset.samples[:4]
        tasks = build_tasks(batch, cfg.cpc_config(), RngState(seed))
        result = total_objective_cpc(batch, [], tasks, params, RngState(seed), alpha=0.0)
        expected = cfg.model.K * math.log(cfg.model.N) + math.log(dataset.num_classes)
        assert result.labeled_sum / len(batch) == pytest.approx(expected, rel=0.1)

    def test_empty_batches_rejected(self, cpc_setup):
        _, _, params = cpc_setup
        with pytest.raises(DataError):
            total_objective_cpc([], [], {}, params, RngState(2), alpha=1.0)

    def test_negative_alpha_rejected(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        with pytest.raises(ConfigError):
            total_objective_cpc(batch, [], tasks, params, RngState(2), alpha=-1.0)

    def test_labeled_loss_needs_label(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        with pytest.raises(DataError):
            labeled_loss_cpc(batch[0].without_label(), tasks[batch[0].id], params, RngState(2), pool)

    def test_short_sequence_rejected(self, cpc_setup):
        cfg, dataset, params = cpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        short = SequenceSample(batch[0].patches[:2], batch[0].label, batch[0].id)
        with pytest.raises(DataError):
            total_objective_cpc([short], [], tasks, params, RngState(2), alpha=1.0)


class TestCcpcObjective:
    def test_bookkeeping_and_entropy_terms(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        result = total_objective_ccpc(batch[:2], [s.without_label() for s in batch[2:]], tasks, params,
                                      RngState(3), 2.0, GumbelConfig(0.5, 1.0, 0.5))
        assert result.check_bookkeeping()
        assert set(result.entropy_terms) == {"gaussian", "categorical", "log_prior", "log_density"}
        assert 0.0 <= result.entropy_terms["categorical"] <= math.log(params.num_classes) + 1e-12

    def test_labeled_weight_bookkeeping(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        unlabeled = [s.without_label() for s in batch[2:]]
        plain = total_objective_ccpc(batch[:2], unlabeled, tasks, params, RngState(3), 2.0)
        weighted = total_objective_ccpc(batch[:2], unlabeled, tasks, params, RngState(3), 2.0, labeled_weight=0.1)
        assert weighted.check_bookkeeping() and weighted.labeled_weight == 0.1
        assert weighted.total - plain.total == pytest.approx(-0.9 * plain.labeled_sum, rel=1e-8, abs=1e-10)

    def test_uniform_prior_term(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, _ = batch_and_tasks(cfg, dataset)
        result = total_objective_ccpc([], batch, tasks, params, RngState(3), 0.0)
        assert result.entropy_terms["log_prior"] == pytest.approx(-math.log(params.num_classes))

    def test_labeled_bound_ignores_gumbel_noise(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        sample = batch[0]
        a = ccpc_labeled_bound(sample, tasks[sample.id], params, RngState(3), pool)
        b = ccpc_labeled_bound(sample, tasks[sample.id], params, RngState(3), pool)
        assert a.total == b.total
        assert a.cls_loss == 0.0

    def test_labeled_bound_needs_label(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        with pytest.raises(DataError):
            ccpc_labeled_bound(batch[0].without_label(), tasks[batch[0].id], params, RngState(3), pool)

    def test_unlabeled_bound_draws_vary_with_seed(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        sample, gumbel = batch[0], GumbelConfig(0.5, 1.0, 0.5)
        first = ccpc_unlabeled_bound(sample, tasks[sample.id], params, gumbel, RngState(1), pool=pool)
        again = ccpc_unlabeled_bound(sample, tasks[sample.id], params, gumbel, RngState(1), pool=pool)
        other = ccpc_unlabeled_bound(sample, tasks[sample.id], params, gumbel, RngState(2), pool=pool)
        assert first.total == again.total
        assert first.total != other.total
        assert first.check_bookkeeping()

    def test_exact_is_reproducible(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        sample = batch[0].without_label()
        first = ccpc_unlabeled_exact(sample, tasks[sample.id], params, RngState(7), n_noise=64, pool=pool)
        second = ccpc_unlabeled_exact(sample, tasks[sample.id], params, RngState(7), n_noise=64, pool=pool)
        assert first == second
        assert math.isfinite(first)

    def test_exact_needs_noise_draws(self, ccpc_setup):
        cfg, dataset, params = ccpc_setup
        batch, tasks, pool = batch_and_tasks(cfg, dataset)
        with pytest.raises(ValueError):
            ccpc_unlabeled_exact(batch[0], tasks[batch[0].id], params, RngState(1), n_noise=0, pool=pool)


class TestSupervisedObjective:
    def test_sum_plus_weighted_mean(self):
        cfg, dataset, params = tiny_setup("supervised-only")
        batch = dataset.samples[:4]
        result = supervised_objective(batch, params, alpha=2.0)
        assert result.check_bookkeeping()
        assert result.labeled_sum == pytest.approx(4 * result.cls_loss)

    def test_empty_batch_rejected(self):
        _, _, params = tiny_setup("supervised-only")
        with pytest.raises(DataError):
            supervised_objective([], params, alpha=1.0)

    def test_classification_loss_empty_is_zero(self):
        assert classification_loss(Tensor(np.zeros((0, 3))), []).item() == 0.0

    def test_classification_loss_uniform(self):
        log_probs = Tensor(np.log(np.full((2, 4), 0.25)))
        assert classification_loss(log_probs, [0, 3]).item() == pytest.approx(math.log(4))

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            classification_loss(Tensor(np.log(np.full((1, 3), 1 / 3))), [3])
