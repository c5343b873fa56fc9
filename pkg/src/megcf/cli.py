"""Command-line entry point: synth, train, eval, ablate, report.

Every command is deterministic given its flags and seeds.  A sectioned
``key = value`` config file can mirror any flag; explicit flags win, and
the effective configuration is echoed into a manifest next to each
command's outputs.  Exit codes: 0 success, 1 usage, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, evaluation, ingestion, training
from .errors import DataError, MegcfError, NumericalError

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--lambda1", type=float, default=1e-4)
    p.add_argument("--lambda2", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=2048)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--eval-every", type=int, default=1)
    p.add_argument("--no-sentiment", action="store_true",
                   help="drop review-sentiment weighting (w/o S)")
    p.add_argument("--no-pn", action="store_true",
                   help="classic symmetric norm, ignore alpha (w/o PN)")
    p.add_argument("--no-entities", action="store_true",
                   help="drop all semantic entities (w/o V&T)")
    p.add_argument("--no-visual", action="store_true",
                   help="drop visual entities (w/o V)")
    p.add_argument("--no-textual", action="store_true",
                   help="drop textual entities (w/o T)")
    p.add_argument("--no-g1", action="store_true",
                   help="disable the interaction-graph branch (w/o g1)")
    p.add_argument("--no-g2", action="store_true",
                   help="disable the tripartite-graph branch (w/o g2)")
    p.add_argument("--no-l1", action="store_true",
                   help="drop the interaction-branch loss (w/o L1)")
    p.add_argument("--no-l2", action="store_true",
                   help="drop the tripartite-branch loss (w/o L2)")
    p.add_argument("--reg-layer0", action="store_true",
                   help="regularize layer-0 instead of last-layer rows")
    p.add_argument("--model", choices=("megcf", "lightgcn", "bprmf"),
                   default="megcf")


def _config_from_args(args) -> training.TrainConfig:
    config = training.TrainConfig(
        dim=args.dim, layers=args.layers, alpha=args.alpha, gamma=args.gamma,
        lr=args.lr, lambda1=args.lambda1, lambda2=args.lambda2,
        batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
        use_sentiment=not args.no_sentiment, use_pn=not args.no_pn,
        use_visual_entities=not (args.no_entities or args.no_visual),
        use_textual_entities=not (args.no_entities or args.no_textual),
        use_g1_branch=not args.no_g1, use_g2_branch=not args.no_g2,
        use_g1_loss=not (args.no_g1 or args.no_l1),
        use_g2_loss=not (args.no_g2 or args.no_l2),
        reg_layer0=args.reg_layer0, patience=args.patience,
        eval_every=args.eval_every)
    if args.model != "megcf":
        config = training.apply_variant(config, args.model)
    try:
        config.validate()
    except ValueError as exc:
        raise DataError(str(exc)) from None
    return config


def build_parser() -> _Parser:
    parser = _Parser(prog="megcf", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", default=None,
                        help="sectioned key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--entities", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent-dim", type=int, default=8)
    p.add_argument("--entity-signal", type=float, default=0.8)
    p.add_argument("--sentiment-signal", type=float, default=0.8)
    p.add_argument("--density", type=float, default=0.02)
    p.add_argument("--entities-per-item", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model, write a checkpoint")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=None,
                   help="split/negative sampling seed (default: --seed)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank held-out items from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ks", default="5,10,20")
    p.add_argument("--out", default=None, help="metrics JSONL path")
    p.add_argument("--which", choices=("test", "validation"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate variants across seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--variants", default="full,wo-vt",
                   help=f"comma list from {sorted(training.VARIANTS)}")
    p.add_argument("--seeds", default="0",
                   help="comma list of seeds, e.g. 0,1,2")
    p.add_argument("--parallel", type=int, default=1,
                   help="run this many seeds concurrently")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    _add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render a metrics JSONL as a table")
    p.add_argument("--records", required=True, nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config_file(parser, args, argv):
    """Load [command] section values as defaults, then reparse flags."""
    cfg = configparser.ConfigParser()
    read = cfg.read(args.config)
    if not read:
        raise DataError(f"config file {args.config!r} not found")
    if not cfg.has_section(args.command):
        return args
    sub = next(a for a in parser._subparsers._group_actions
               if isinstance(a, argparse._SubParsersAction))
    command_parser = sub.choices[args.command]
    defaults = {}
    for key, value in cfg.items(args.command):
        dest = key.replace("-", "_")
        action = next((a for a in command_parser._actions if a.dest == dest),
                      None)
        if action is None:
            raise DataError(f"{args.config}: unknown option {key!r} in "
                            f"[{args.command}]")
        if isinstance(action, (argparse._StoreTrueAction,
                               argparse._StoreFalseAction)):
            defaults[dest] = cfg.getboolean(args.command, key)
        elif action.type is not None:
            defaults[dest] = action.type(value)
        else:
            defaults[dest] = value
    command_parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _write_manifest(path, args, extra=None) -> None:
    payload = {k: v for k, v in vars(args).items()
               if k not in ("func",) and not k.startswith("_")}
    payload["version"] = __version__
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def cmd_synth(args) -> int:
    spec = ingestion.SyntheticSpec(
        num_users=args.users, num_items=args.items, num_entities=args.entities,
        latent_dim=args.latent_dim, entity_signal=args.entity_signal,
        sentiment_signal=args.sentiment_signal, target_density=args.density,
        seed=args.seed, entities_per_item=args.entities_per_item)
    raw = ingestion.generate_synthetic(spec)
    ingestion.write_dataset(raw, args.out)
    _write_manifest(os.path.join(args.out, "manifest.json"), args,
                    {"interactions": len(raw.interactions),
                     "entity_rows": len(raw.item_entities)})
    print(f"wrote {len(raw.interactions)} interactions, "
          f"{len(raw.item_entities)} entity rows to {args.out}")
    return 0


def _run_training(data_dir, config, split_seed):
    raw = ingestion.load_dataset(data_dir)
    raw = ingestion.filter_entity_kinds(
        raw, visual=config.use_visual_entities,
        textual=config.use_textual_entities)
    raw = ingestion.five_core_filter(raw)
    mapped = ingestion.remap_ids(raw)
    split = evaluation.make_split(mapped.edges, mapped.num_users,
                                  mapped.num_items,
                                  np.random.default_rng(split_seed))
    data = ingestion.prepare_training_data(mapped, split, config)
    result = training.fit(data, config)
    return mapped, split, result


def cmd_train(args) -> int:
    config = _config_from_args(args)
    split_seed = args.seed if args.split_seed is None else args.split_seed
    mapped, split, result = _run_training(args.data, config, split_seed)
    ingestion.save_checkpoint(args.out, config, result.table, split, mapped)
    log_path = args.out + ".log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for record in result.log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _write_manifest(args.out + ".manifest.json", args,
                    {"effective_config": dataclasses.asdict(config),
                     "split_seed": split_seed,
                     "best_epoch": result.best_epoch})
    last = result.log[-1] if result.log else {}
    print(f"trained {len(result.log)} epochs; final loss "
          f"{last.get('loss', float('nan')):.6f}; checkpoint {args.out}")
    return 0


def _checkpoint_metrics(ckpt, ks, which):
    config = ckpt.config
    data = ingestion.prepare_training_data(ckpt.mapped, ckpt.split, config)
    weights = training.build_weights(data, config)
    plan1, plan2 = training.build_plans(data, config, weights)
    reps = training.final_representations(ckpt.table, plan1, plan2,
                                          config.layers)
    ranks = evaluation.rank_events(reps, ckpt.split, which=which)
    return evaluation.metrics_table(ranks, ks)


def _format_table(rows, columns) -> str:
    header = ["variant"] + list(columns)
    widths = [max(len(str(r.get(c, ""))) for r in rows + [dict(zip(header, header))])
              for c in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(str(r.get(c, "")).ljust(w)
                               for c, w in zip(header, widths)))
    return "\n".join(lines)


def cmd_eval(args) -> int:
    ks = tuple(int(k) for k in args.ks.split(","))
    ckpt = ingestion.load_checkpoint(args.checkpoint)
    metrics = _checkpoint_metrics(ckpt, ks, args.which)
    records = [{"metric": m, "value": v} for m, v in metrics.items()]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    row = {"variant": os.path.basename(args.checkpoint)}
    row.update({m: f"{v:.4f}" for m, v in metrics.items()})
    print(_format_table([row], list(metrics)))
    return 0


def _one_ablation_run(data_dir, config, variant, seed):
    run_config = dataclasses.replace(
        training.apply_variant(config, variant), seed=seed)
    mapped, split, result = _run_training(data_dir, run_config, seed)
    data = ingestion.prepare_training_data(mapped, split, run_config)
    weights = training.build_weights(data, run_config)
    plan1, plan2 = training.build_plans(data, run_config, weights)
    reps = training.final_representations(result.table, plan1, plan2,
                                          run_config.layers)
    ranks = evaluation.rank_events(reps, split, which="test")
    return evaluation.metrics_table(ranks)


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    for v in variants:
        if v not in training.VARIANTS:
            raise DataError(f"unknown variant {v!r}")
    os.makedirs(args.out, exist_ok=True)

    jobs = [(v, s) for v in variants for s in seeds]
    results: dict[tuple[str, int], dict | Exception] = {}
    if args.parallel > 1:
        with ThreadPoolExecutor(max_workers=args.parallel) as pool:
            futures = {
                (v, s): pool.submit(_one_ablation_run, args.data, config, v, s)
                for v, s in jobs}
            for key, fut in futures.items():
                try:
                    results[key] = fut.result()
                except MegcfError as exc:
                    results[key] = exc
    else:
        for v, s in jobs:
            try:
                results[(v, s)] = _one_ablation_run(args.data, config, v, s)
            except MegcfError as exc:
                results[(v, s)] = exc

    records_path = os.path.join(args.out, "ablation.jsonl")
    failures = []
    with open(records_path, "w", encoding="utf-8") as fh:
        for (v, s), res in results.items():
            if isinstance(res, Exception):
                failures.append(((v, s), res))
                fh.write(json.dumps({"variant": v, "seed": s,
                                     "error": str(res)}) + "\n")
                continue
            for metric, value in res.items():
                fh.write(json.dumps({"variant": v, "seed": s,
                                     "metric": metric, "value": value},
                                    sort_keys=True) + "\n")

    rows = []
    metric_names = ["hr@5", "hr@10", "hr@20", "ndcg@5", "ndcg@10", "ndcg@20"]
    for v in variants:
        row = {"variant": v}
        for metric in metric_names:
            values = [results[(v, s)][metric] for s in seeds
                      if not isinstance(results[(v, s)], Exception)]
            if not values:
                row[metric] = "failed"
            elif len(seeds) == 1:
                row[metric] = f"{values[0]:.4f}"
            else:
                row[metric] = (f"{statistics.mean(values):.4f}"
                               f"±{statistics.stdev(values):.4f}")
        rows.append(row)
    table = _format_table(rows, metric_names)
    with open(os.path.join(args.out, "ablation.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(table + "\n")
    _write_manifest(os.path.join(args.out, "manifest.json"), args,
                    {"effective_config": dataclasses.asdict(config),
                     "failures": len(failures)})
    print(table)
    if failures:
        (_, first) = failures[0]
        return EXIT_NUMERICAL if isinstance(first, NumericalError) else EXIT_DATA
    return 0


def cmd_report(args) -> int:
    rows: dict[str, dict] = {}
    for path in args.records:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if "metric" not in rec:
                    continue
                key = str(rec.get("variant", path))
                if rec.get("seed") is not None:
                    key = f"{key}/seed{rec['seed']}"
                rows.setdefault(key, {"variant": key})
                rows[key][rec["metric"]] = f"{rec['value']:.4f}"
    columns = sorted({c for r in rows.values() for c in r if c != "variant"})
    print(_format_table(list(rows.values()), columns))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            args = _apply_config_file(parser, args, argv)
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
