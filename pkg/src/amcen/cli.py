"""Command-line surface: stats, train, eval, predict.

Exit codes are a stable contract: 0 success, 2 usage error, 3 data error,
4 checkpoint error. Every command writes its outputs under ``--out`` along
with a manifest JSON. ``AMCEN_DATA_DIR`` provides the default dataset root:
dataset paths that do not exist as given are retried relative to it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, restore_model
from .config import RunConfig, load_config, save_config
from .data import SPLIT_NAMES, dataset_statistics, load_dataset
from .errors import AmcenError, CheckpointError, DataError, UsageError
from .evaluation import InferenceSession, evaluate_split, write_query_csv
from .network import build_model
from .training import train_pipeline

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CHECKPOINT = 4


def resolve_dataset_dir(path: str) -> Path:
    root = os.environ.get("AMCEN_DATA_DIR")
    candidates = [Path(path)] + ([Path(root) / path] if root else [])
    directory = next((c for c in candidates if c.is_dir()), None)
    if directory is None:
        raise UsageError(f"no such dataset directory: {path}"
                         + (f" (also tried under AMCEN_DATA_DIR={root})" if root else ""))
    missing = [n for n in SPLIT_NAMES if not (directory / f"{n}.txt").exists()]
    if missing:
        raise UsageError(f"dataset directory {directory} is missing "
                         f"{', '.join(n + '.txt' for n in missing)}")
    return directory


def _config_from_args(args) -> RunConfig:
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = getattr(args, "set", None) or []
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    type_map = {"int": int, "float": float, "str": str, "bool": bool}
    for item in overrides:
        if "=" not in item:
            raise DataError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in fields:
            raise DataError(f"unknown config key {key!r}")
        ftype = fields[key].type
        if isinstance(ftype, str):
            ftype = type_map[ftype]
        if ftype is bool:
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            value = ftype(raw.strip())
        setattr(config, key, value)
    if getattr(args, "data", None):
        config.dataset_dir = args.data
    if getattr(args, "out", None):
        config.out_dir = args.out
    if getattr(args, "granularity", None):
        config.granularity = args.granularity
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    config.validate()
    return config


def _write_manifest(out_dir: Path, command: str, config, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": dataclasses.asdict(config) if dataclasses.is_dataclass(config) else config,
        "outputs": sorted(outputs),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)


def cmd_stats(args) -> int:
    dataset_dir = resolve_dataset_dir(args.dataset)
    dataset = load_dataset(dataset_dir, granularity=args.granularity)
    report = dataset_statistics(dataset.snapshot_sequence())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats_json = {
        "dataset": str(dataset_dir),
        "granularity": args.granularity,
        "entities": dataset.vocab.num_entities,
        "relations": dataset.vocab.num_relations,
        "time_granules": dataset.vocab.num_times,
        "splits": report.to_json(),
    }
    with open(out_dir / "stats.json", "w") as fh:
        json.dump(stats_json, fh, indent=1)
    report.write_csv(out_dir / "per_timestamp.csv")
    _write_manifest(out_dir, "stats", {"dataset": str(dataset_dir),
                                       "granularity": args.granularity},
                    ["stats.json", "per_timestamp.csv"])
    for split, values in stats_json["splits"].items():
        print(f"{split}: events={values['events']} new={values['new_events']} "
              f"proportion={values['proportion']:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _config_from_args(args)
    dataset = load_dataset(resolve_dataset_dir(config.dataset_dir), config.granularity)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / "config.ini")
    paths = train_pipeline(dataset, config.train_config(), out_dir, stage=args.stage)
    outputs = ["config.ini", "train_log.jsonl"] + [p.name for p in paths.values() if p]
    _write_manifest(out_dir, "train", config, outputs)
    for stage, path in paths.items():
        print(f"{stage} checkpoint: {path}")
    return EXIT_OK


def _load_model(config: RunConfig, dataset, checkpoint_path, force: bool):
    vocab = dataset.vocab
    model = build_model(vocab.num_entities, vocab.num_relations, vocab.num_times,
                        config.train_config())
    ckpt = load_checkpoint(checkpoint_path, expected_config=config.train_config(),
                           force=force)
    restore_model(model, ckpt)
    return model, ckpt


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    dataset = load_dataset(resolve_dataset_dir(config.dataset_dir), config.granularity)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = args.checkpoint or str(out_dir / "stage2.ckpt")
    model, _ = _load_model(config, dataset, checkpoint, args.force)
    with_filtered = args.mode in ("filtered", "both")
    result = evaluate_split(model, dataset, args.split, config.train_config(),
                            use_predictive_mask=not config.no_predictive_mask,
                            gt_mask_override=config.gt_predictive_mask,
                            with_filtered=with_filtered, collect=bool(args.per_query))
    reports = result if isinstance(result, tuple) else (result,)
    results = None
    if args.per_query:
        *reports, results = reports
    rows = []
    for report in reports:
        if args.mode in (report.mode, "both"):
            rows.extend(report.to_json())
    metrics_path = out_dir / "metrics.json"
    with open(metrics_path, "w") as fh:
        json.dump(rows, fh, indent=1)
    outputs = ["metrics.json"]
    if results is not None:
        write_query_csv(results, out_dir / args.per_query)
        outputs.append(args.per_query)
    _write_manifest(out_dir, "eval", config, outputs)
    for row in rows:
        print(f"[{row['mode']}/{row['direction']}] mrr={row['mrr']:.4f} "
              f"hits1={row['hits1']:.4f} hits3={row['hits3']:.4f} hits10={row['hits10']:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    config = _config_from_args(args)
    dataset = load_dataset(resolve_dataset_dir(config.dataset_dir), config.granularity)
    try:
        s, r, t = (int(v) for v in args.query.split(","))
    except ValueError:
        raise DataError(f"--query expects 's,r,t' integers, got {args.query!r}") from None
    vocab = dataset.vocab
    if not (0 <= s < vocab.num_entities and 0 <= r < vocab.num_relations
            and 0 <= t <= vocab.num_times):
        raise DataError(f"query ({s}, {r}, {t}) outside the vocabulary")
    checkpoint = args.checkpoint or str(Path(config.out_dir) / "stage2.ckpt")
    model, _ = _load_model(config, dataset, checkpoint, args.force)
    relation = r if args.direction == "obj" else r + vocab.num_relations
    session = InferenceSession(model, dataset, config.train_config())
    session.warm_to(t)
    session.advance()
    dist, prediction, predicted_label = session.infer(
        s, relation, use_predictive_mask=not config.no_predictive_mask)
    scores = dist.probs.numpy()
    order = np.argsort(-scores, kind="stable")[:config.topk]
    kind = "recurring" if predicted_label else "new"
    print(f"query=({s}, {r}, ?, {t}) direction={args.direction} predicted_event_type={kind}")
    names = vocab.entity_names or {}
    for rank, ent in enumerate(order, start=1):
        label = names.get(int(ent), str(int(ent)))
        print(f"  {rank:2d}. entity {int(ent)} ({label})  p={scores[ent]:.6f}")
    print(f"prediction: {prediction}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amcen",
        description="Two-stage temporal knowledge graph extrapolation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="dataset statistics and event proportions")
    p_stats.add_argument("dataset", help="dataset directory (or name under AMCEN_DATA_DIR)")
    p_stats.add_argument("--granularity", type=int, default=1)
    p_stats.add_argument("--out", default="stats_out")
    p_stats.set_defaults(func=cmd_stats)

    def common(p):
        p.add_argument("--data", help="dataset directory (or name under AMCEN_DATA_DIR)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--granularity", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None,
                       help="CPU worker threads for tensor ops")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field")

    p_train = sub.add_parser("train", help="run the two training stages")
    common(p_train)
    p_train.add_argument("--stage", choices=("1", "2", "all"), default="all")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    common(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint path (default <out>/stage2.ckpt)")
    p_eval.add_argument("--split", choices=("valid", "test"), default="test")
    p_eval.add_argument("--mode", choices=("raw", "filtered", "both"), default="raw")
    p_eval.add_argument("--per-query", help="also dump per-query CSV with this filename")
    p_eval.add_argument("--force", action="store_true",
                        help="ignore config fingerprint mismatches")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="score a single query")
    common(p_pred)
    p_pred.add_argument("--checkpoint", help="checkpoint path (default <out>/stage2.ckpt)")
    p_pred.add_argument("--query", required=True, metavar="S,R,T",
                        help="subject id, base relation id, time index "
                             "(after granularity division and re-basing)")
    p_pred.add_argument("--direction", choices=("obj", "subj"), default="obj")
    p_pred.add_argument("--force", action="store_true")
    p_pred.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None):
        import torch
        torch.set_num_threads(args.workers)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AmcenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
