import os
import tempfile

# Storage must point somewhere disposable before cpcssl.core.config is imported.
os.environ.setdefault("CPCSSL_STORAGE", tempfile.mkdtemp(prefix="cpcssl-tests-"))
os.environ.setdefault("CPCSSL_LOG_LEVEL", "WARNING")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from cpcssl.autodiff.rng import RngState  # noqa: E402
from cpcssl.verify.suites import tiny_config, tiny_setup  # noqa: E402


@pytest.fixture
def rng():
    return RngState(1234)


@pytest.fixture
def gen():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def cpc_setup():
    """(resolved config, dataset, params) for a tiny CPC model."""
    return tiny_setup("cpc")


@pytest.fixture
def ccpc_setup():
    return tiny_setup("ccpc")
