import math

import numpy as np
import pytest

from cpcssl.autodiff import RngState, Tensor, count_macs
from cpcssl.core.exceptions import ConfigError, ShapeError
from cpcssl.cpc.aggregator import (
    LOG_VAR_MAX,
    AggregatorParams,
    ContextDistribution,
    aggregate_context,
    context_noise,
    sample_context,
)
from cpcssl.cpc.encoder import ConvLayer, TextEncoderParams, VisionEncoderParams, conv_output_side
from cpcssl.cpc.params import CpcConfig
from cpcssl.cpc.predictor import PredictorBank, info_nce_step_loss, nce_from_scores, pool_features, score, step_scores


class TestCpcConfig:
    def test_min_length(self):
        assert CpcConfig(t=2, K=3).min_length == 5

    @pytest.mark.parametrize("kwargs", [{"t": 0}, {"K": 0}, {"N": 1}, {"d_z": 0}])
    def test_rejects_degenerate_sizes(self, kwargs):
        with pytest.raises(ConfigError):
            CpcConfig(**kwargs)


class TestEncoders:
    def test_vision_codes_shape(self, gen):
        layers = [ConvLayer(4, 3, 1), ConvLayer(4, 3, 2)]
        enc = VisionEncoderParams.init(gen, (1, 12, 12), layers, hidden=0, d_z=6)
        codes = enc.encode(gen.normal(size=(5, 1, 12, 12)))
        assert codes.shape == (5, 6)
        assert enc.d_z == 6

    def test_vision_rejects_wrong_patch(self, gen):
        enc = VisionEncoderParams.init(gen, (1, 12, 12), [ConvLayer(2, 3, 1)], hidden=0, d_z=4)
        with pytest.raises(ShapeError):
            enc.encode(np.zeros((2, 1, 10, 10)))

    def test_conv_output_side(self):
        assert conv_output_side(12, 3, 1) == 10
        assert conv_output_side(8, 3, 2) == 3
        with pytest.raises(ShapeError):
            conv_output_side(2, 3, 1)

    def test_text_codes_are_three_filter_groups(self, gen):
        enc = TextEncoderParams.init(gen, vocab_size=20, embed=5, filters=4, max_tokens=8)
        codes = enc.encode(gen.integers(0, 20, size=(3, 8)))
        assert codes.shape == (3, 12)
        assert enc.d_z == 12

    def test_text_too_short_for_widest_filter(self, gen):
        with pytest.raises(ShapeError):
            TextEncoderParams.init(gen, vocab_size=10, embed=4, filters=2, max_tokens=4)

    def test_encoder_macs_tagged(self, gen):
        enc = VisionEncoderParams.init(gen, (1, 6, 6), [ConvLayer(2, 3, 1)], hidden=0, d_z=3)
        with count_macs() as macs:
            enc.encode(np.zeros((1, 1, 6, 6)))
        assert macs["enc"] == 2 * 4 * 4 * 9 + 2 * 4 * 4 * 3
        assert macs["ag"] == 0


class TestAggregator:
    def test_context_distribution_shapes(self, gen):
        agg = AggregatorParams.init(gen, d_z=4, d_c=3)
        dist = aggregate_context(Tensor(gen.normal(size=(2, 4))), agg, t=2)
        assert dist.mu.shape == (3,)
        assert dist.log_var.shape == (3,)

    def test_batched_matches_single(self, gen):
        agg = AggregatorParams.init(gen, d_z=4, d_c=3)
        z = gen.normal(size=(3, 2, 4))
        batched = aggregate_context(Tensor(z), agg)
        for i in range(3):
            single = aggregate_context(Tensor(z[i]), agg)
            np.testing.assert_allclose(batched.mu.data[i], single.mu.data, atol=1e-12)

    def test_wrong_context_length(self, gen):
        agg = AggregatorParams.init(gen, d_z=4, d_c=3)
        with pytest.raises(ShapeError):
            aggregate_context(Tensor(np.zeros((3, 4))), agg, t=2)

    def test_conditional_needs_condition(self, gen):
        agg = AggregatorParams.init(gen, d_z=4, d_c=3, cond_dim=2)
        with pytest.raises(ShapeError):
            aggregate_context(Tensor(np.zeros((2, 4))), agg)
        dist = aggregate_context(Tensor(np.zeros((2, 4))), agg, condition=Tensor(np.array([1.0, 0.0])))
        assert dist.mu.shape == (3,)

    def test_zero_parameters_give_standard_context(self, gen):
        agg = AggregatorParams.init(gen, d_z=4, d_c=3)
        for p in agg.named().values():
            p.data[...] = 0.0
        dist = aggregate_context(Tensor(gen.normal(size=(2, 4))), agg, t=2)
        np.testing.assert_array_equal(dist.mu.data, np.zeros(3))
        np.testing.assert_array_equal(dist.log_var.data, np.zeros(3))

    def test_context_depends_on_order(self, gen):
        agg = AggregatorParams.init(gen, d_z=4, d_c=3)
        z = gen.normal(size=(3, 4))
        forward = aggregate_context(Tensor(z), agg)
        reversed_ = aggregate_context(Tensor(z[::-1].copy()), agg)
        assert not np.allclose(forward.mu.data, reversed_.mu.data)

    def test_log_variance_is_clamped(self, gen):
        agg = AggregatorParams.init(gen, d_z=2, d_c=2)
        agg.log_var_b.data[:] = 50.0
        dist = aggregate_context(Tensor(np.zeros((2, 2))), agg)
        np.testing.assert_allclose(dist.log_var.data, [LOG_VAR_MAX, LOG_VAR_MAX])

    def test_sample_context_reparameterises(self):
        dist = ContextDistribution(Tensor(np.array([1.0, -1.0])), Tensor(np.log(np.array([4.0, 1.0]))))
        c = sample_context(dist, eps=np.array([0.5, 2.0]))
        np.testing.assert_allclose(c.data, [2.0, 1.0])

    def test_context_noise_keyed_by_id(self):
        rng = RngState(3)
        np.testing.assert_array_equal(context_noise(rng, 7, 4), context_noise(rng, 7, 4))
        assert not np.allclose(context_noise(rng, 7, 4), context_noise(rng, 8, 4))

    def test_sample_context_needs_noise_source(self):
        dist = ContextDistribution(Tensor(np.zeros(2)), Tensor(np.zeros(2)))
        with pytest.raises(ValueError):
            sample_context(dist)


class TestPredictor:
    def test_score_is_bilinear(self):
        w = Tensor(np.array([[1.0, 2.0], [0.0, 1.0], [3.0, 0.0]]))
        z = Tensor(np.array([1.0, 1.0, 1.0]))
        c = Tensor(np.array([2.0, 1.0]))
        assert score(z, c, w).item() == pytest.approx(z.data @ w.data @ c.data)

    def test_step_scores_match_single_scores(self, gen):
        w = Tensor(gen.normal(size=(4, 3)))
        c = Tensor(gen.normal(size=(2, 3)))
        candidates = Tensor(gen.normal(size=(2, 5, 4)))
        scores = step_scores(c, candidates, w).data
        expected = np.einsum("bnz,zc,bc->bn", candidates.data, w.data, c.data)
        np.testing.assert_allclose(scores, expected, atol=1e-12)

    def test_equal_candidates_give_log_n(self, gen):
        w = Tensor(gen.normal(size=(4, 3)))
        candidates = Tensor(np.tile(gen.normal(size=4), (6, 1)))
        loss = info_nce_step_loss(Tensor(gen.normal(size=3)), candidates, 2, w)
        assert loss.item() == pytest.approx(math.log(6))

    def test_info_nce_closed_form(self):
        loss = nce_from_scores(Tensor(np.array([[2.0, 0.0, 0.0, 0.0]])), np.array([0]))
        assert loss.data[0] == pytest.approx(0.34075, abs=1e-5)

    def test_info_nce_falls_as_positive_score_rises(self):
        losses = [nce_from_scores(Tensor(np.array([[s, 0.0, 0.0, 0.0]])), np.array([0])).data[0]
                  for s in (5.0, 10.0, 20.0)]
        assert losses[0] > losses[1] > losses[2] > 0.0

    def test_info_nce_shift_invariant(self, gen):
        scores = gen.normal(size=(3, 6))
        positives = np.array([0, 2, 5])
        base = nce_from_scores(Tensor(scores), positives).data
        shifted = nce_from_scores(Tensor(scores + 7.5), positives).data
        np.testing.assert_allclose(shifted, base, atol=1e-12)

    def test_positive_index_range(self, gen):
        with pytest.raises(IndexError):
            info_nce_step_loss(Tensor(np.zeros(3)), Tensor(np.zeros((4, 2))), 4, Tensor(np.zeros((2, 3))))

    def test_bank_names(self, gen):
        bank = PredictorBank.init(gen, K=3, d_z=4, d_c=2)
        assert sorted(bank.named()) == ["pred.w1", "pred.w2", "pred.w3"]
        assert bank.K == 3

    def test_pool_features_mean(self):
        z = Tensor(np.array([[1.0, 2.0], [3.0, 6.0]]))
        np.testing.assert_allclose(pool_features(z).data, [2.0, 4.0])

    def test_pool_features_ignores_order(self, gen):
        z = gen.normal(size=(2, 5, 3))
        shuffled = z[:, gen.permutation(5)]
        np.testing.assert_allclose(pool_features(Tensor(shuffled)).data, pool_features(Tensor(z)).data, atol=1e-12)
