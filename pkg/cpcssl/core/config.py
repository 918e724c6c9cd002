import os
import logging

# Simple Configuration
APP_NAME = "cpcssl"
APP_VERSION = "0.4.0"

# Thread cap has to land in the environment before numpy loads its BLAS.
THREADS = int(os.getenv("CPCSSL_THREADS", "1"))
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, str(THREADS))

# Use /storage when a volume is mounted there, fallback to local storage for development
STORAGE_DIR = os.getenv("CPCSSL_STORAGE") or ("/storage" if os.path.isdir("/storage") else "storage")
RUNS_DIR = os.path.join(STORAGE_DIR, "runs")

METRICS_FILE = "metrics.jsonl"
EFFECTIVE_CONFIG_FILE = "effective_config.json"
SPLIT_MANIFEST_FILE = "split_manifest.json"
CHECKPOINT_FILE = "checkpoint.cpcs"
EVAL_SUMMARY_FILE = "eval_summary.json"

LOG_LEVEL = os.getenv("CPCSSL_LOG_LEVEL", "INFO").upper()

# Ensure storage exists
if not os.path.exists(RUNS_DIR):
    os.makedirs(RUNS_DIR, exist_ok=True)


def get_storage_health(storage_dir: str = STORAGE_DIR) -> dict:
    """Returns storage health status for the health endpoint."""
    import platform

    runs_dir = os.path.join(storage_dir, "runs")
    storage_info = {
        "path": storage_dir,
        "is_mounted_volume": storage_dir == "/storage",
        "writable": False,
        "run_count": 0,
        "status": "unknown",
        "message": "",
        "system": platform.system(),
        "threads": THREADS,
    }

    if not os.path.exists(storage_dir):
        storage_info["status"] = "error"
        storage_info["message"] = f"Storage directory does not exist: {storage_dir}"
        return storage_info

    if not os.path.isdir(storage_dir):
        storage_info["status"] = "error"
        storage_info["message"] = f"Storage path is not a directory: {storage_dir}"
        return storage_info

    # Test write permission
    try:
        test_file = os.path.join(storage_dir, ".write_test")
        with open(test_file, "w") as f:
            f.write("test")
        os.remove(test_file)
        storage_info["writable"] = True
    except OSError as e:
        storage_info["status"] = "error"
        storage_info["message"] = f"Storage not writable: {str(e)}"
        return storage_info

    if os.path.isdir(runs_dir):
        storage_info["run_count"] = sum(
            1 for name in os.listdir(runs_dir) if os.path.isdir(os.path.join(runs_dir, name))
        )

    if storage_info["run_count"]:
        storage_info["status"] = "healthy"
        storage_info["message"] = f"Storage healthy, {storage_info['run_count']} run(s) found"
    else:
        storage_info["status"] = "warning"
        storage_info["message"] = "Storage healthy, but no runs recorded yet"

    return storage_info


# Logging Setup
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)

logger = logging.getLogger("cpcssl")
