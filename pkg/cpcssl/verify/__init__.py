from cpcssl.verify.suites import SUITES, run_suite, suite_names

__all__ = ["SUITES", "run_suite", "suite_names"]
