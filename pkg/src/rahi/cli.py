"""Command-line entry point.

Exit codes: 0 success, 2 bad input (usage, config, data, missing model),
1 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RahiConfig, load_config
from .dataio import IngestError, ingest, write_metrics_csv
from .pipeline import ARMS, DEFAULT_SCHEDULE, Evaluator, PipelineError, TrainedModel, ablate, dynamic_eval, train_all
from .synthetic import generate_synthetic, write_corpus

log = logging.getLogger("rahi")


class UsageError(Exception):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="overrides the run and generator seeds")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--data", help="directory with news.jsonl and comments.jsonl (default: --out)")
    p.add_argument("--model", help="trained model directory (default: --out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="rahi", description="Reliability-aware machine-crowd fake news detection.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    sub.add_parser("train", parents=[common], help="train and save a model")
    sub.add_parser("eval", parents=[common], help="static test-split metrics")
    sub.add_parser("ablate", parents=[common], help="hybrid vs single-source and no-adjustment variants")
    sub.add_parser("dynamic", parents=[common], help="accuracy over comment time windows")
    p = sub.add_parser("inspect", parents=[common], help="per-news machine, crowd and fused distributions")
    p.add_argument("--news-id", help="one news id (default: every test item)")
    p.add_argument("--max-offset", type=int, help="only use comments posted within this many seconds")
    return parser


def _config(args) -> RahiConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        cfg.seed = cfg.synth.seed = args.seed
    return cfg


def _dataset(args, cfg: RahiConfig):
    data = Path(args.data or args.out)
    news, comments = data / "news.jsonl", data / "comments.jsonl"
    for f in (news, comments):
        if not f.is_file():
            raise UsageError(f"missing data file {f}")
    ds, report = ingest(news, comments, cfg.activity_threshold, cfg.activity_mode)
    log.info("ingested %d news; %s", len(ds.news), report)
    return ds


def _model(args) -> TrainedModel:
    path = Path(args.model or args.out)
    if not TrainedModel.exists(path):
        raise UsageError(f"no trained model in {path}; run 'rahi train' first")
    return TrainedModel.load(path)


def cmd_synth(args) -> None:
    cfg = _config(args)
    paths = write_corpus(generate_synthetic(cfg.synth), args.out)
    print(json.dumps({k: str(v) for k, v in paths.items()}))


def cmd_train(args) -> None:
    cfg = _config(args)
    model = train_all(_dataset(args, cfg), cfg)
    out = Path(args.model or args.out)
    model.save(out)
    with open(out / "train_log.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(model.history[0]))
        w.writeheader()
        w.writerows(model.history)
    print(f"model saved to {out} (best validation accuracy {max(h['valid_accuracy'] for h in model.history):.4f})")


def cmd_eval(args) -> None:
    model = _model(args)
    ds = _dataset(args, model.config)
    reports = Evaluator(model, ds, model.split.test).reports()
    Path(args.out).mkdir(parents=True, exist_ok=True)
    path = Path(args.out) / "metrics.csv"
    write_metrics_csv(path, ((arm, -1, reports[arm]) for arm in ARMS))
    for arm in ARMS:
        print(f"{arm:<22} accuracy {reports[arm].accuracy:.4f}")
    print(f"metrics written to {path}")


def cmd_ablate(args) -> None:
    model_dir = Path(args.model or args.out)
    if TrainedModel.exists(model_dir):
        model = TrainedModel.load(model_dir)
        cfg = model.config
    else:
        cfg = _config(args)
        model = None
    ds = _dataset(args, cfg)
    table = ablate(ds, cfg, model)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    path = Path(args.out) / "ablation.csv"
    write_metrics_csv(path, ((arm, -1, rep) for arm, rep in table.items()))
    for arm, rep in table.items():
        print(f"{arm:<22} accuracy {rep.accuracy:.4f}")


def cmd_dynamic(args) -> None:
    model = _model(args)
    ds = _dataset(args, model.config)
    curve = dynamic_eval(model, ds, DEFAULT_SCHEDULE)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    path = Path(args.out) / "dynamic.csv"
    write_metrics_csv(path, ((arm, t, reps[arm]) for t, reps in curve for arm in reps))
    for t, reps in curve:
        print(f"{t:>7}s  " + "  ".join(f"{arm} {rep.accuracy:.4f}" for arm, rep in reps.items()))


def cmd_inspect(args) -> None:
    model = _model(args)
    ds = _dataset(args, model.config)
    if args.news_id is not None:
        if args.news_id not in ds.labels:
            raise UsageError(f"unknown news id {args.news_id!r}")
        ids = [args.news_id]
    else:
        ids = model.split.test
    for item in Evaluator(model, ds, ids).items(args.max_offset):
        print(json.dumps(item.as_dict()))


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "dynamic": cmd_dynamic,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, ConfigError, IngestError) as exc:
        print(f"rahi {args.command}: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"rahi {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"rahi {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
