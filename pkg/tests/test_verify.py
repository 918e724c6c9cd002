import pytest

from cpcssl.core.exceptions import ConfigError
from cpcssl.models.runs import VerifyReport
from cpcssl.verify import SUITES, run_suite, suite_names
from cpcssl.data.loader import synthetic_spec
from cpcssl.training.complexity import TEST_RATIO_LIMIT, TOLERANCE
from cpcssl.verify.suites import GAIN_BATCH, SLOW_SUITES, bound_estimates, gain_config, tiny_config


class TestRegistry:
    def test_names(self):
        names = suite_names()
        assert set(SUITES) <= set(names)
        assert "all" in names
        assert SLOW_SUITES == ("ssl-gain",)

    def test_unknown_suite(self):
        with pytest.raises(ConfigError) as info:
            run_suite("nonsense")
        assert info.value.key == "suite"

    def test_tiny_config_is_valid(self):
        cfg = tiny_config(model={"N": 4})
        assert cfg.model.N == 4 and cfg.train.batch_size == 8


class TestReport:
    def test_lines(self):
        report = VerifyReport(suite="demo")
        report.add("a", 0.5, 1.0, True)
        report.add("b", 2.0, 1.0, False, "too big")
        lines = report.lines()
        assert lines[0] == "PASS a: value=0.5 threshold=1"
        assert lines[1] == "FAIL b: value=2 threshold=1 (too big)"
        assert lines[2] == "suite demo: FAILED (2 checks)"
        assert not report.passed


class TestQuickSuites:
    @pytest.mark.parametrize("name", ["gradients", "entropy", "gumbel", "chance"])
    def test_cheap_suites_pass(self, name):
        report = run_suite(name, quick=True)
        failed = [line for line in report.lines() if line.startswith("FAIL")]
        assert report.checks and not failed

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["ccpc-enum", "complexity", "determinism"])
    def test_heavier_suites_pass(self, name):
        report = run_suite(name, quick=True)
        failed = [line for line in report.lines() if line.startswith("FAIL")]
        assert report.checks and not failed

    @pytest.mark.slow
    def test_all_prefixes_check_names(self):
        report = run_suite("all", quick=True)
        prefixes = {check.name.split(":")[0] for check in report.checks}
        assert prefixes == set(SUITES) - set(SLOW_SUITES)


def failures(report):
    return [line for line in report.lines() if line.startswith("FAIL")]


class TestComplexitySuite:
    @pytest.mark.slow
    def test_ssl_test_forward_is_measured(self):
        checks = {check.name: check for check in run_suite("complexity", quick=True).checks}
        assert checks["SSL test MACs vs formula"].value <= TOLERANCE
        ratio = checks["SSL test cost / supervised"]
        assert 1.0 < ratio.value <= TEST_RATIO_LIMIT
        assert "non-overlapping tiles" in ratio.detail


class TestDeterminismSuite:
    @pytest.mark.slow
    def test_determinism_covers_resume(self):
        report = run_suite("determinism", quick=True)
        names = [check.name for check in report.checks]
        assert "cpc resumed checkpoint identical" in names
        assert not failures(report)


class TestBounds:
    @pytest.mark.slow
    def test_trained_bound_is_informative_at_low_noise(self):
        rows = bound_estimates(0.25, 1024, 1024, 5)
        informative = [(truth, estimate) for truth, estimate, _ in rows if truth > 0.5]
        assert informative
        for truth, estimate in informative:
            assert 0.0 < estimate
        for truth, estimate, se in rows:
            assert estimate <= truth + 3 * se


class TestSslGain:
    @pytest.mark.parametrize("mode", ["cpc", "ccpc", "supervised-only"])
    def test_gain_config_is_valid(self, mode):
        cfg = gain_config(mode, 0.01, 0, quick=True)
        assert cfg.train.mode == mode and cfg.train.batch_size == GAIN_BATCH
        assert cfg.train.alpha is None
        spec = synthetic_spec(cfg)
        assert spec.patch_dim + spec.distractor_dim == 112

    def test_full_protocol_trains_longer(self):
        full = gain_config("cpc", 0.2, 0, quick=False)
        quick = gain_config("supervised-only", 0.2, 0, quick=True)
        assert full.train.epochs > quick.train.epochs
        assert full.data.synthetic_count > quick.data.synthetic_count

    @pytest.mark.slow
    def test_ssl_gain_suite_passes(self):
        report = run_suite("ssl-gain")
        assert len(report.checks) == 4
        assert not failures(report)
