from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional


class RunSummary(BaseModel):
    """A run directory with its latest metrics line."""
    run_id: str
    mode: Optional[str] = None
    epochs_done: int = 0
    last_metrics: Optional[Dict[str, Any]] = None
    has_checkpoint: bool = False


class EvalRequest(BaseModel):
    """Top-k values to report."""
    k_list: List[int] = Field(default_factory=lambda: [1, 5], description="e.g. [1, 5]")


class EvalResult(BaseModel):
    run_id: str
    epoch: int
    accuracy: Dict[str, float]


class VerifyCheck(BaseModel):
    """One property check: ``value`` compared against ``threshold``."""
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


class VerifyReport(BaseModel):
    suite: str
    checks: List[VerifyCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, value: float, threshold: float, passed: bool, detail: str = "") -> None:
        self.checks.append(VerifyCheck(name=name, value=float(value), threshold=float(threshold),
                                       passed=bool(passed), detail=detail))

    def lines(self) -> List[str]:
        rows = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value:.6g} threshold={c.threshold:.6g}"
                + (f" ({c.detail})" if c.detail else "") for c in self.checks]
        rows.append(f"suite {self.suite}: {'passed' if self.passed else 'FAILED'} ({len(self.checks)} checks)")
        return rows
