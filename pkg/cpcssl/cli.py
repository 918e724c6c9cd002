"""Command-line entry point: ``python -m cpcssl <command>``."""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from cpcssl.core.config import APP_NAME, APP_VERSION, CHECKPOINT_FILE, RUNS_DIR, logger
from cpcssl.core.exceptions import ConfigError, CpcSSLError, VerificationError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class CliParser(argparse.ArgumentParser):
    """argparse with failures reduced to one ``error=E_USAGE`` line."""

    def error(self, message: str):
        print(f"error=E_USAGE {' '.join(message.split())}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def experiment_overrides(args: argparse.Namespace) -> List[str]:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"train.seed={args.seed}")
    if getattr(args, "mode", None):
        overrides.append(f'train.mode="{args.mode}"')
    return overrides


def cmd_train(args: argparse.Namespace) -> int:
    from cpcssl.models.config import parse_config
    from cpcssl.store.run_store import make_run_id
    from cpcssl.training.trainer import Trainer

    cfg = parse_config(args.config, experiment_overrides(args))
    run_dir = Path(args.out) if args.out else Path(RUNS_DIR) / make_run_id(cfg)
    trainer = Trainer(cfg, run_dir)
    history = trainer.run(resume=args.resume)
    print(f"run_dir={run_dir}")
    print(json.dumps(trainer.cfg.model_dump(mode="json"), sort_keys=True))
    if history:
        print(json.dumps(history[-1]))
    return EXIT_OK


def accuracy_table(accuracy) -> List[str]:
    rows = ["k    top-k acc"]
    rows += [f"{k:<4} {acc:.4f}" for k, acc in sorted(accuracy.items())]
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    from cpcssl.models.config import parse_config
    from cpcssl.store.run_store import evaluate_checkpoint, load_run_config

    if args.run:
        run_dir = Path(args.run)
        cfg = load_run_config(run_dir)
        checkpoint = Path(args.checkpoint) if args.checkpoint else run_dir / CHECKPOINT_FILE
        out_dir = Path(args.out) if args.out else run_dir
    else:
        if not (args.config and args.checkpoint):
            raise ConfigError("eval needs --run, or --config with --checkpoint", key="eval")
        cfg = parse_config(args.config, experiment_overrides(args))
        checkpoint = Path(args.checkpoint)
        out_dir = Path(args.out) if args.out else checkpoint.parent
    k_list = args.k or list(cfg.train.k_list)
    accuracy = evaluate_checkpoint(cfg, checkpoint, out_dir, k_list)
    print("\n".join(accuracy_table(accuracy)))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from cpcssl.verify.suites import run_suite

    report = run_suite(args.suite, quick=args.quick)
    print("\n".join(report.lines()))
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise VerificationError(f"suite {args.suite}: {len(failed)} failed check(s): {'; '.join(failed)}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    from cpcssl.data.synthetic import SyntheticSpec, load_spec, write_synthetic

    spec = load_spec(args.spec) if args.spec else SyntheticSpec()
    out = write_synthetic(args.out, spec, args.count, args.seed)
    print(f"out_dir={out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    logger.info(f"Serving {args.app} on {args.host}:{args.port}")
    uvicorn.run(args.app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog=APP_NAME, description="Semi-supervised contrastive predictive coding")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    def experiment_flags(sub: argparse.ArgumentParser):
        sub.add_argument("--config", help="TOML experiment config")
        sub.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="Override one config key")
        sub.add_argument("--seed", type=int, help="Shortcut for --set train.seed=N")
        sub.add_argument("--mode", choices=["cpc", "ccpc", "supervised-only"], help="Shortcut for train.mode")

    train = commands.add_parser("train", help="Train a model and write metrics and checkpoints")
    experiment_flags(train)
    train.add_argument("--resume", action="store_true", help="Continue from the run's checkpoint")
    train.add_argument("--out", help="Run directory (default: <storage>/runs/<run id>)")
    train.set_defaults(handler=cmd_train)

    evaluate = commands.add_parser("eval", help="Top-k accuracy of a checkpoint")
    experiment_flags(evaluate)
    evaluate.add_argument("--run", help="Run directory holding an effective config and checkpoint")
    evaluate.add_argument("--checkpoint", help="Checkpoint file")
    evaluate.add_argument("--k", type=int, action="append", help="Top-k value, repeatable (default: train.k_list)")
    evaluate.add_argument("--out", help="Directory for the evaluation summary")
    evaluate.set_defaults(handler=cmd_eval)

    verify = commands.add_parser("verify", help="Run a property suite")
    verify.add_argument("suite", help="gradients, chance, entropy, gumbel, ccpc-enum, bounds, complexity, "
                                      "determinism, ssl-gain or all")
    verify.add_argument("--quick", action="store_true", help="Smaller sample counts, same thresholds")
    verify.set_defaults(handler=cmd_verify)

    synth = commands.add_parser("synth", help="Write a synthetic dataset with its MI manifest")
    synth.add_argument("--spec", help="SyntheticSpec JSON (default: built-in spec)")
    synth.add_argument("--out", required=True, help="Output directory")
    synth.add_argument("--count", type=int, default=1000, help="Number of sequences")
    synth.add_argument("--seed", type=int, default=0, help="Root seed")
    synth.set_defaults(handler=cmd_synth)

    serve = commands.add_parser("serve", help="Serve the JSON API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--app", default="main:app", help="ASGI application path")
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CpcSSLError as exc:
        print(exc.one_line(), file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ConfigError) else EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001
        logger.debug("Unhandled error", exc_info=True)
        print(f"error=E_INTERNAL {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_FAILURE
