from fastapi import APIRouter, HTTPException, Query

from cpcssl.models.runs import VerifyReport
from cpcssl.verify.suites import run_suite, suite_names

router = APIRouter()


@router.get("/")
async def list_suites():
    """Names accepted by POST /{suite}."""
    return {"success": True, "suites": suite_names()}


@router.post("/{suite}")
def verify_suite(suite: str, quick: bool = Query(False, description="Smaller sample counts")):
    """
    Run a property suite and return its checks.

    - **suite**: one of the names from GET /
    - **quick**: smoke-size run with the same thresholds
    """
    if suite not in suite_names():
        raise HTTPException(status_code=404, detail=f"Unknown verify suite '{suite}'.")
    report: VerifyReport = run_suite(suite, quick)
    return {"success": report.passed, "suite": report.suite, "passed": report.passed,
            "checks": [check.model_dump() for check in report.checks]}
