"""Semi-supervised classification with contrastive predictive coding."""
from cpcssl.core.config import APP_NAME, APP_VERSION

__version__ = APP_VERSION
__all__ = ["APP_NAME", "APP_VERSION", "__version__"]
