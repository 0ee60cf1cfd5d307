"""Command-line front end.

Subcommands: gen, train, eval, params, gradcheck. Exit codes: 0 ok,
1 check failure, 2 config error, 3 I/O error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .train import NumericAbort

__all__ = ["main"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cvnet",
        description="complex-valued network harness: datasets, training, "
                    "evaluation, parameter reports, gradient checks")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate train and eval splits")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True,
                     help="dataset directory (train/ and eval/ inside)")
    gen.add_argument("--seed", type=int, default=None,
                     help="override the config master seed")
    gen.add_argument("--workers", type=int, default=1)

    train = sub.add_parser("train", help="train on a generated dataset")
    train.add_argument("--config", required=True)
    train.add_argument("--dataset", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--checkpoint", default=None,
                       help="resume from this checkpoint directory")
    train.add_argument("--no-figure", action="store_true",
                       help="skip the loss-curve PNG")

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--config", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--out", required=True, help="metrics CSV path")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--no-figure", action="store_true",
                    help="skip the metrics PNG")

    par = sub.add_parser("params", help="parameter-count report")
    par.add_argument("--config", required=True)
    par.add_argument("--out", default=None,
                     help="also write the report as JSON here")

    gc = sub.add_parser("gradcheck", help="finite-difference gradient "
                                          "verification")
    gc.add_argument("--scope", default="all",
                    help="component name, 'layer', 'task', or 'all'")
    return parser


def _cmd_gen(args):
    from .data import generate, save_dataset
    cfg = load_config(args.config, seed=args.seed)
    for split in ("train", "eval"):
        ds = generate(cfg, split, workers=args.workers)
        save_dataset(ds, Path(args.out) / split)
    return 0


def _cmd_train(args):
    from .train import train_run
    cfg = load_config(args.config, seed=args.seed)
    train_run(cfg, args.dataset, args.out, resume=args.checkpoint,
              figure=not args.no_figure)
    return 0


def _cmd_eval(args):
    from .evaluate import eval_run
    cfg = load_config(args.config, seed=args.seed)
    eval_run(cfg, args.dataset, args.checkpoint, args.out,
             workers=args.workers, figure=not args.no_figure)
    return 0


def _cmd_params(args):
    from .params_report import build_report, format_report, write_report
    cfg = load_config(args.config)
    report = build_report(cfg)
    print(format_report(report))
    if args.out:
        write_report(report, args.out)
    return 0


def _cmd_gradcheck(args):
    from .registry import run_gradcheck
    results = run_gradcheck(args.scope)
    for r in results:
        status = "PASS" if r["ok"] else "FAIL"
        print(f"{r['component']:<24} max rel err {r['max_err']:.3e}  "
              f"tol {r['tol']:.0e}  {status}")
    failed = [r["component"] for r in results if not r["ok"]]
    if failed:
        print(f"gradcheck failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "params": _cmd_params,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
