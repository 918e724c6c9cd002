from fastapi import APIRouter, Depends, HTTPException, Query
from pathlib import Path

from cpcssl.core.config import CHECKPOINT_FILE
from cpcssl.models.runs import EvalRequest, EvalResult
from cpcssl.store.run_store import RunStore

router = APIRouter()


def get_store():
    """Dependency provider for the run store."""
    return RunStore()


def require_run(run_id: str, store: RunStore) -> Path:
    run_dir = store.run_dir(run_id)
    if run_dir is None:
        raise HTTPException(status_code=404, detail=f"Run '{run_id}' not found.")
    return run_dir


@router.get("/")
async def list_runs(
    skip: int = Query(0, ge=0, description="Number of runs to skip"),
    limit: int = Query(100, ge=1, le=500, description="Number of runs to return"),
    store: RunStore = Depends(get_store)
):
    """
    List training runs with their latest metrics line.

    - **skip**: Number of runs to skip (for pagination)
    - **limit**: Maximum number of runs to return (default: 100, max: 500)
    """
    runs = store.fetch_run_list()
    return {
        "success": True,
        "total": len(runs),
        "skip": skip,
        "limit": limit,
        "runs": [run.model_dump() for run in runs[skip:skip + limit]]
    }


@router.get("/{run_id}/metrics")
async def get_metrics(run_id: str, store: RunStore = Depends(get_store)):
    """Every epoch line of the run's metrics file."""
    run_dir = require_run(run_id, store)
    metrics = store.fetch_metrics(run_dir)
    return {"success": True, "run_id": run_id, "total": len(metrics), "metrics": metrics}


@router.get("/{run_id}/config")
async def get_config(run_id: str, store: RunStore = Depends(get_store)):
    """The effective config the run was trained with."""
    run_dir = require_run(run_id, store)
    return {"success": True, "run_id": run_id, "config": store.fetch_config(run_dir)}


@router.post("/{run_id}/eval", response_model=EvalResult)
def evaluate_run(run_id: str, request: EvalRequest, store: RunStore = Depends(get_store)):
    """
    Evaluate the run's latest checkpoint on its evaluation data.

    - **k_list**: top-k values to report; top-1 is always included
    """
    run_dir = require_run(run_id, store)
    if not (run_dir / CHECKPOINT_FILE).exists():
        raise HTTPException(status_code=404, detail=f"Run '{run_id}' has no checkpoint yet.")
    if any(k < 1 for k in request.k_list):
        raise HTTPException(status_code=422, detail="k_list entries must be >= 1.")
    return store.evaluate(run_dir, request.k_list)
