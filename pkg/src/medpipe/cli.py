"""Command line entry point: ``medpipe {train,predict,evaluate}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config.document import load_config
from .errors import ConfigError, MedpipeError, SchemaError
from .workspace import RunLog, Workspace, WorkspaceLock

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

COMMANDS = {
    # command: (config kind, default file, artifact directory attribute)
    "train": ("Train", "Config.yml", "statistics"),
    "predict": ("Prediction", "Prediction.yml", "predictions"),
    "evaluate": ("Evaluation", "Evaluation.yml", "evaluations"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="medpipe", description="Train, predict with and evaluate segmentation models "
                                                 "described by YAML configuration files.")
    sub = parser.add_subparsers(dest="command", metavar="{train,predict,evaluate}", parser_class=_Parser)
    for name, (kind, default, _) in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {kind} pipeline (config: {default})")
        p.add_argument("--config", type=Path, default=None, help=f"configuration file (default: <workspace>/{default})")
        p.add_argument("--workspace", type=Path, default=None, help="workspace root (default: current directory)")
        p.add_argument("--seed", type=int, default=None, help="override manual_seed")
        p.add_argument("--verbose", action="store_true", help="echo log lines to stdout")
        if name == "predict":
            p.add_argument("--models", nargs="+", default=None,
                           help="checkpoint files to ensemble (default: latest checkpoint of train_name)")
    return parser


def _report(message: str, log_path: Path | None = None) -> None:
    print(message, file=sys.stderr)
    if log_path is not None:
        with RunLog(log_path) as log:
            for line in message.splitlines():
                log(line)


def run(args: argparse.Namespace) -> int:
    kind, default, artifact = COMMANDS[args.command]
    workspace = (args.workspace or Path.cwd()).resolve()
    config_path = args.config if args.config is not None else workspace / default
    try:
        cfg = load_config(config_path, kind)
    except SchemaError as exc:
        _report("\n".join(f"error: {d}" for d in exc.diagnostics))
        return EXIT_CONFIG
    except ConfigError as exc:
        _report(f"error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _report(f"error: cannot read {config_path}: {exc.strerror or exc}")
        return EXIT_CONFIG

    ws = Workspace(workspace, cfg.body["train_name"])
    log_path = getattr(ws, artifact) / "log.txt"
    try:
        with WorkspaceLock(workspace):
            if args.command == "train":
                from .trainer import train
                result = train(cfg, ws, seed=args.seed, verbose=args.verbose)
                if result is not None and args.verbose:
                    print(f"checkpoint: {result}")
            elif args.command == "predict":
                from .inference import predict
                predict(cfg, ws, seed=args.seed, models=args.models, verbose=args.verbose)
            else:
                from .evaluator import evaluate
                evaluate(cfg, ws, verbose=args.verbose)
    except SchemaError as exc:
        _report("\n".join(f"error: {d}" for d in exc.diagnostics), log_path)
        return EXIT_CONFIG
    except ConfigError as exc:
        _report(f"error: {exc}", log_path)
        return EXIT_CONFIG
    except (MedpipeError, OSError, ValueError) as exc:
        case = getattr(exc, "case_context", None)
        prefix = f"case {case}: " if case else ""
        _report(f"error: {prefix}{type(exc).__name__}: {exc}", log_path)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
