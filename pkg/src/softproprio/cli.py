"""``softproprio`` command line: generate, train, eval, detect, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adaptation.models import VARIANTS
from .adaptation.trainer import TrainingDiverged
from .config import ConfigError, load_config
from .dataset import DatasetError
from .generate import OutputExistsError, generate_dataset
from .pipeline import EvaluationError, RunPaths, detect_episode, evaluate, train_variant
from .report import emit_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_EVAL = 5

log = logging.getLogger("softproprio")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run config (defaults apply when omitted)")
    common.add_argument("--out", default="run", help="run directory (default: ./run)")
    common.add_argument("--seed", type=int, help="restrict to one training seed")
    common.add_argument("--force", action="store_true", help="overwrite existing output")
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="softproprio", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="generate the twin dataset")
    t = sub.add_parser("train", parents=[common], help="train one model variant for every seed")
    t.add_argument("variant", help="one of: " + ", ".join(VARIANTS))
    sub.add_parser("eval", parents=[common], help="evaluate checkpoints and write the report")
    d = sub.add_parser("detect", parents=[common], help="collision detection log for one episode file")
    d.add_argument("episode", help="episode .npz or .csv")
    d.add_argument("--variant", default="dual-ae")
    sub.add_parser("report", parents=[common], help="re-emit the report from report/results.json")
    return p


def _run(args) -> int:
    cfg = load_config(args.config)
    paths = RunPaths(Path(args.out))
    if args.seed is not None and args.seed not in cfg.training.seeds:
        raise ConfigError(f"seed {args.seed} is not among the configured seeds {cfg.training.seeds}")
    if args.command == "generate":
        m = generate_dataset(cfg.dataset, paths.data, force=args.force, workers=cfg.evaluation.pool_size(),
                             config_hash=cfg.config_hash())
        for (domain, kind), (n_train, n_val) in m.counts().items():
            log.info("%-5s %-18s train %d  val %d", domain, kind, n_train, n_val)
        print(f"dataset written to {paths.data} ({len(m.episodes)} episodes)")
    elif args.command == "train":
        if args.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {args.variant!r}; valid: {', '.join(VARIANTS)}")
        seeds = [args.seed] if args.seed is not None else None
        bundles = train_variant(cfg, paths, args.variant, seeds, force=args.force)
        for b in bundles:
            print(f"{b.variant} seed {b.seed}: {paths.ckpt(b.variant, b.seed)}")
    elif args.command == "eval":
        if args.seed is not None:
            cfg = cfg.model_copy(update={"training": cfg.training.model_copy(update={"seeds": [args.seed]})})
        results = evaluate(cfg, paths)
        paths.report.mkdir(parents=True, exist_ok=True)
        (paths.report / "results.json").write_text(json.dumps(results, sort_keys=True) + "\n")
        emit_report(results, paths.report)
        print(f"report written to {paths.report}")
    elif args.command == "report":
        src = paths.report / "results.json"
        if not src.exists():
            raise EvaluationError(f"{src} not found; run `eval` first")
        emit_report(json.loads(src.read_text()), paths.report)
        print(f"report written to {paths.report}")
    elif args.command == "detect":
        out = detect_episode(cfg, paths, args.episode, args.variant, args.seed)
        print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, OutputExistsError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training diverged: {exc} (last good checkpoint kept)", file=sys.stderr)
        return EXIT_DIVERGED
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
