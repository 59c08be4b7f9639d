"""Command-line front end: ``modalflow {generate,train,predict,analyze,run,verify}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline, verify
from .config import SCALES, ConfigError, preset_names, resolve
from .dataset import DatasetFormatError
from .resnet import ModelFormatError, NonFiniteError
from .solvers import BlowUpError
from .training import TrainingDiverged

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4

log = logging.getLogger("modalflow")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalflow",
        description="Learn modal-space evolution operators of PDEs and predict with them.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="experiment JSON file")
    src.add_argument("--preset", choices=preset_names(), help="shipped experiment preset")
    common.add_argument("--scale", choices=SCALES, default="desk", help="preset scale (default: desk)")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", type=Path, help="run directory (default: runs/<preset>-<scale>)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key by dotted path, e.g. training.epochs=200")

    sub.add_parser("generate", parents=[common], help="sample modal states and write training pairs")
    p_train = sub.add_parser("train", parents=[common], help="train the network on the run's dataset")
    p_train.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    sub.add_parser("predict", parents=[common], help="roll the trained model out and write references")
    sub.add_parser("analyze", parents=[common], help="error series, coefficient tables, bound report")
    sub.add_parser("run", parents=[common], help="generate, train, predict and analyze in one go")
    sub.add_parser("verify", help="run the invariant suite")
    sub.add_parser("presets", help="list shipped presets")
    return parser


def _out_dir(args, exp) -> Path:
    if args.out is not None:
        return args.out
    name = exp.doc.get("name", "experiment")
    return Path("runs") / f"{name}-{exp.doc.get('scale', 'custom')}"


def _progress(epoch, hist):
    if epoch % 10 == 0:
        log.info("epoch %d  loss %.4e", epoch, hist.train_loss[-1])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")

    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    if args.command == "verify":
        checks = verify.run_all()
        for c in checks:
            print(c.line())
        failed = sum(not c.passed for c in checks)
        print(f"{len(checks) - failed}/{len(checks)} checks passed")
        return EXIT_OK if failed == 0 else EXIT_VERIFY

    try:
        exp = resolve(args.config, args.preset, args.scale, args.seed, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args, exp)

    try:
        if args.command == "generate":
            ds = pipeline.generate(exp, out)
            print(f"wrote {len(ds)} pairs to {out / pipeline.DATASET}")
        elif args.command == "train":
            _, hist = pipeline.train_model(exp, out, resume=args.resume, progress=_progress)
            print(f"final training loss {hist.train_loss[-1]:.4e} after {hist.epochs} epochs")
        elif args.command == "predict":
            trajs = pipeline.predict(exp, out)
            print(f"wrote {', '.join(sorted(trajs))} trajectories to {out}")
        elif args.command in ("analyze", "run"):
            if args.command == "run":
                pipeline.generate(exp, out)
                pipeline.train_model(exp, out, progress=_progress)
                pipeline.predict(exp, out)
            report, _ = pipeline.analyze(exp, out)
            print(f"relative field error at t = {report.times[-1]:g}: {report.rel_err_field[-1]:.4e}; "
                  f"coefficient bound holds: {report.holds}")
    except (ConfigError, DatasetFormatError, ModelFormatError, pipeline.MissingInputsError,
            pipeline.LockedError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUpError, TrainingDiverged, NonFiniteError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
