"""Command-line pipeline: pages in, graphs, schema, model, scores, reports.

Exit codes: 0 success, 2 bad usage, 3 unreadable or inconsistent data,
4 version/fingerprint mismatch between artifacts.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dom import estimate_geometry, load_prerendered, parse_html
from .errors import VersionError
from .features import FeatureSchema, encode_graph, fit_buckets
from .graph import build_layout_graph, read_graphs, write_graphs
from .metrics import NoComparablePairs, SingleClass, evaluate_scores
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .store import (
    BadWeight,
    ScoreStore,
    StoreError,
    format_report,
    read_ranked_lists,
    rerank_sim,
    score_batch,
    write_ranked_lists,
)
from .synth import BadRatios, BadSpec, TemplateSpec, generate, read_manifest, split
from .train import LabeledExample, TrainConfig, _val_metrics, run_ablation, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERSION = 4

logger = logging.getLogger(__name__)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _parse_csv(text: str, cast=str) -> list:
    return [cast(part.strip()) for part in text.split(",") if part.strip()]


def _ingest_manifest(manifest_dir: Path, manifest: dict):
    """Layout graphs for every manifest page, in doc order."""
    graphs = []
    for doc in manifest["docs"]:
        html = (manifest_dir / doc["html"]).read_text(encoding="utf-8")
        tree = estimate_geometry(parse_html(html, url=doc["url"],
                                            category=doc["category"]))
        graphs.append(build_layout_graph(tree))
    return graphs


def _labeled_examples(manifest: dict, graphs, schema: FeatureSchema):
    return [LabeledExample(graph=encode_graph(g, schema), label=float(doc["label"]),
                           category=doc["category"])
            for g, doc in zip(graphs, manifest["docs"])]


def _model_config(args, file_config: dict) -> ModelConfig:
    merged = {**asdict(ModelConfig()), **file_config.get("model", {})}
    for flag, key in [("arch", "arch"), ("readout", "readout"), ("head", "head"),
                      ("dim", "hidden_dim"), ("layers", "num_layers"),
                      ("dropout", "dropout")]:
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    if getattr(args, "no_category", False):
        merged["use_category"] = False
    return ModelConfig(**merged)


def _train_config(args, file_config: dict) -> TrainConfig:
    merged = {k: v for k, v in asdict(TrainConfig()).items() if k != "model"}
    merged.update({k: v for k, v in file_config.get("train", {}).items() if k != "model"})
    for flag, key in [("lr", "learning_rate"), ("batch_size", "batch_size"),
                      ("epochs", "epochs"), ("seed", "seed")]:
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = value
    if getattr(args, "no_upsample", False):
        merged["upsample"] = False
    return TrainConfig(model=_model_config(args, file_config), **merged)


def _split_examples(manifest, examples, args):
    parts = split(manifest, tuple(args.ratios), seed=args.split_seed)
    by_id = {doc["doc_id"]: ex for doc, ex in zip(manifest["docs"], examples)}
    return {name: [by_id[i] for i in ids] for name, ids in parts.items()}


def cmd_ingest(args) -> int:
    if bool(args.manifest) == bool(args.inputs):
        raise BadSpec("give either --manifest or input files, not both")
    if args.manifest:
        manifest_dir = Path(args.manifest)
        graphs = _ingest_manifest(manifest_dir, read_manifest(manifest_dir))
    else:
        graphs = []
        for raw in args.inputs:
            path = Path(raw)
            if args.prerendered:
                tree = load_prerendered(path)
            else:
                tree = estimate_geometry(parse_html(
                    path.read_text(encoding="utf-8"), url=str(path),
                    category=args.category))
            graphs.append(build_layout_graph(tree))
    write_graphs(graphs, args.out)
    print(f"wrote {len(graphs)} graphs to {args.out}")
    return EXIT_OK


def cmd_fit_buckets(args) -> int:
    graphs = read_graphs(args.graphs)
    schema = fit_buckets(graphs, min_count=args.min_count,
                         target_buckets=args.target_buckets, embedding_dim=args.dim)
    schema.save(args.out)
    print(f"schema {schema.hash()}: {len(schema.features)} features, "
          f"{len(schema.category_vocab.tokens)} categories -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = TemplateSpec(categories=tuple(_parse_csv(args.categories)),
                        rich_fraction=args.rich_fraction, seed=args.seed)
    manifest = generate(spec, args.num, args.out, emit_prerendered=args.emit_prerendered)
    labels = [d["label"] for d in manifest["docs"]]
    print(f"generated {args.num} pages in {args.out} "
          f"({sum(labels)} high quality, {len(labels) - sum(labels)} low)")
    return EXIT_OK


def cmd_train(args) -> int:
    file_config = _load_toml(args.config) if args.config else {}
    config = _train_config(args, file_config)
    schema = FeatureSchema.load(args.schema)
    manifest_dir = Path(args.manifest)
    manifest = read_manifest(manifest_dir)
    examples = _labeled_examples(manifest, _ingest_manifest(manifest_dir, manifest), schema)
    parts = _split_examples(manifest, examples, args)

    params, history = train(parts["train"], parts["val"], config, schema)
    meta = {"history": history, "train_config": {**{k: v for k, v in asdict(config).items()
                                                    if k != "model"}},
            "split": {k: len(v) for k, v in parts.items()}}
    save_checkpoint(args.out, params, schema.hash(), meta=meta)

    held_out = parts["test"] or parts["val"]
    metrics = _val_metrics(params, held_out)
    shown = " ".join(f"{name}={value:.4f}" if value is not None else f"{name}=n/a"
                     for name, value in metrics.items())
    print(f"saved {args.out}; held-out {shown}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    file_config = _load_toml(args.config) if args.config else {}
    base = _train_config(args, file_config)
    schema = FeatureSchema.load(args.schema)
    manifest_dir = Path(args.manifest)
    manifest = read_manifest(manifest_dir)
    examples = _labeled_examples(manifest, _ingest_manifest(manifest_dir, manifest), schema)
    parts = _split_examples(manifest, examples, args)

    rows = run_ablation(parts["train"], parts["val"], base, schema,
                        seeds=_parse_csv(args.seeds, int),
                        k_values=_parse_csv(args.k_values, int))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True)
        fh.write("\n")
    for row in rows:
        auc = row["metrics"]["auc"]
        print(f"{row['variant']:<24} auc={auc['mean']:.4f}±{auc['std']:.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    schema = FeatureSchema.load(args.schema)
    params, _ = load_checkpoint(args.model, schema)
    version = args.model_version or _file_digest(args.model)
    graphs = [encode_graph(g, schema) for g in read_graphs(args.graphs)]
    store = score_batch(params, schema, graphs, model_version=version)
    store.write(args.out)
    print(f"scored {len(store.rows)} documents -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    store = ScoreStore.read(args.scores)
    manifest = read_manifest(Path(args.manifest))
    docs = manifest["docs"]
    if args.split != "all":
        keep = set(split(manifest, tuple(args.ratios), seed=args.split_seed)[args.split])
        docs = [d for d in docs if d["doc_id"] in keep]
    if not docs:
        raise StoreError(f"no documents in split {args.split!r}")
    scores_by_url = store.lookup()
    labels, scores = [], []
    for doc in docs:
        if doc["url"] not in scores_by_url:
            raise StoreError(f"no stored score for {doc['url']}")
        labels.append(float(doc["label"]))
        scores.append(scores_by_url[doc["url"]])
    try:
        report = evaluate_scores(labels, scores)
    except (SingleClass, NoComparablePairs) as exc:
        raise StoreError(f"split {args.split!r} is degenerate: {exc}") from None
    print(report.line())
    if args.out:
        payload = {"auc": report.auc, "pnr": report.pnr, "precision": report.precision,
                   "recall": report.recall, "f1": report.f1}
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_rerank_sim(args) -> int:
    store = ScoreStore.read(args.scores)
    queries = read_ranked_lists(args.queries)
    outcome = rerank_sim(queries, store, weight=args.weight, p=args.depth)
    if args.out:
        write_ranked_lists([q.after for q in outcome.queries], args.out)
    moved = sum(len(q.moves) for q in outcome.queries)
    print(f"dcg@{args.depth} before={outcome.mean_dcg_before:.4f} "
          f"after={outcome.mean_dcg_after:.4f} delta={outcome.delta:+.4f} "
          f"({moved} positions changed over {len(queries)} queries)")
    for q in outcome.queries:
        for url, old, new in q.moves:
            logger.info("%s: %s %d -> %d", q.query, url, old, new)
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.base, "r", encoding="utf-8") as fh:
        base = json.load(fh)
    with open(args.new, "r", encoding="utf-8") as fh:
        new = json.load(fh)
    print(format_report(base, new, base_name=Path(args.base).stem,
                        new_name=Path(args.new).stem))
    return EXIT_OK


def _add_split_flags(sub):
    sub.add_argument("--ratios", type=lambda s: _parse_csv(s, float),
                     default=[0.8, 0.1, 0.1], help="train,val,test fractions")
    sub.add_argument("--split-seed", type=int, default=0)


def _add_train_flags(sub):
    sub.add_argument("--config", help="TOML file with [train] and [model] tables")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--no-upsample", action="store_true")
    sub.add_argument("--arch", choices=["gat", "gin"])
    sub.add_argument("--readout", choices=["virtual", "mean_pool"])
    sub.add_argument("--head", choices=["sigmoid", "linear"])
    sub.add_argument("--no-category", action="store_true")
    sub.add_argument("--dim", type=int)
    sub.add_argument("--layers", type=int)
    sub.add_argument("--dropout", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutrank",
        description="Layout-only webpage quality scoring pipeline.")
    parser.add_argument("--verbose", action="store_true", help="show progress logs")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("ingest", help="HTML or pre-rendered pages -> graph JSONL")
    sub.add_argument("inputs", nargs="*", help="HTML files (or JSONL with --prerendered)")
    sub.add_argument("--manifest", help="generated-corpus directory to ingest instead")
    sub.add_argument("--prerendered", action="store_true",
                     help="inputs are pre-rendered node JSONL, not HTML")
    sub.add_argument("--category", default="", help="category for raw HTML inputs")
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_ingest)

    sub = commands.add_parser("fit-buckets", help="fit feature schema over graphs")
    sub.add_argument("--graphs", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--min-count", type=int, default=50)
    sub.add_argument("--target-buckets", type=int, default=16)
    sub.add_argument("--dim", type=int, default=64)
    sub.set_defaults(func=cmd_fit_buckets)

    sub = commands.add_parser("synth", help="generate a labeled synthetic corpus")
    sub.add_argument("--out", required=True)
    sub.add_argument("--num", type=int, required=True)
    sub.add_argument("--categories", default="news,video,shopping,forum,reference")
    sub.add_argument("--rich-fraction", type=float, default=0.3)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--emit-prerendered", action="store_true")
    sub.set_defaults(func=cmd_synth)

    sub = commands.add_parser("train", help="train a quality model on a corpus")
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--schema", required=True)
    sub.add_argument("--out", required=True)
    _add_train_flags(sub)
    _add_split_flags(sub)
    sub.set_defaults(func=cmd_train)

    sub = commands.add_parser("ablate", help="architecture/readout/depth grid")
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--schema", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--seeds", default="0,1,2,3,4")
    sub.add_argument("--k-values", default="1,3,5,7")
    _add_train_flags(sub)
    _add_split_flags(sub)
    sub.set_defaults(func=cmd_ablate)

    sub = commands.add_parser("score", help="score graphs into a TSV store")
    sub.add_argument("--model", required=True)
    sub.add_argument("--schema", required=True)
    sub.add_argument("--graphs", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--model-version", help="defaults to the checkpoint digest")
    sub.set_defaults(func=cmd_score)

    sub = commands.add_parser("evaluate", help="classification metrics from a store")
    sub.add_argument("--scores", required=True)
    sub.add_argument("--manifest", required=True)
    sub.add_argument("--split", choices=["train", "val", "test", "all"], default="all")
    sub.add_argument("--out", help="also write metrics as JSON")
    _add_split_flags(sub)
    sub.set_defaults(func=cmd_evaluate)

    sub = commands.add_parser("rerank-sim", help="blend quality into rankings")
    sub.add_argument("--scores", required=True)
    sub.add_argument("--queries", required=True)
    sub.add_argument("--weight", type=float, required=True)
    sub.add_argument("--depth", type=int, default=4, help="DCG cut-off")
    sub.add_argument("--out", help="write reranked lists as JSONL")
    sub.set_defaults(func=cmd_rerank_sim)

    sub = commands.add_parser("report", help="compare two metric JSON files")
    sub.add_argument("--base", required=True)
    sub.add_argument("--new", required=True)
    sub.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BadSpec, BadRatios, BadWeight) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VersionError as exc:
        print(f"version mismatch: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
