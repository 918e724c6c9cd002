from cpcssl.store.run_store import RunStore, evaluate_checkpoint, load_run_config, make_run_id

__all__ = ["RunStore", "evaluate_checkpoint", "load_run_config", "make_run_id"]
