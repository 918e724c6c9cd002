from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from cpcssl.api.v1 import runs, verify
from cpcssl.core.config import APP_NAME, APP_VERSION, get_storage_health, logger
from cpcssl.core.exceptions import CheckpointError, ConfigError, CpcSSLError, DataError, IncompatibleCheckpointError

app = FastAPI(
    title=APP_NAME,
    description="Semi-supervised contrastive predictive coding: runs, evaluation and property checks",
    version=APP_VERSION
)

STATUS_BY_ERROR = [
    (IncompatibleCheckpointError, 409),
    (CheckpointError, 500),
    (ConfigError, 400),
    (DataError, 400),
]


# Global Exception Handlers
@app.exception_handler(CpcSSLError)
async def cpcssl_error_handler(request: Request, exc: CpcSSLError):
    status = next((code for kind, code in STATUS_BY_ERROR if isinstance(exc, kind)), 500)
    logger.error(f"{request.method} {request.url.path} failed: {exc.one_line()}")
    return JSONResponse(
        status_code=status,
        content={"error": exc.code, "message": exc.message},
    )


# Include Routers
app.include_router(runs.router, prefix="/api/v1/runs", tags=["Runs"])
app.include_router(verify.router, prefix="/api/v1/verify", tags=["Verify"])


@app.get("/api/v1/health")
async def health_check():
    storage = get_storage_health()
    status = "ok" if storage["status"] != "error" else "degraded"
    return {"status": status, "app": APP_NAME, "version": APP_VERSION, "storage": storage}
