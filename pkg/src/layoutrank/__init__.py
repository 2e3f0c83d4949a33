"""Layout-only webpage quality assessment.

Pipeline: parse HTML into a DOM tree with estimated geometry, build a
layout graph with a global virtual hub, bucketize per-node features into
a fitted schema, score with a graph attention (or isomorphism) network
trained by a self-contained reverse-mode tape, and evaluate with ranking
metrics. Everything is seeded and byte-reproducible end to end.
"""
from .dom import (
    DomNode,
    DomTree,
    EmptyDocument,
    Geometry,
    NodeType,
    estimate_geometry,
    load_prerendered,
    parse_html,
    write_prerendered,
)
from .errors import VersionError
from .features import (
    BucketSpec,
    EncodedGraph,
    FeatureSchema,
    FeatureVocab,
    encode_graph,
    fit_bucket_boundaries,
    fit_buckets,
)
from .graph import LayoutGraph, build_layout_graph, graph_stats, read_graphs, write_graphs
from .metrics import (
    EvalReport,
    auc,
    dcg_at,
    evaluate_scores,
    gsb,
    low_quality_share,
    mean_dcg,
    pnr,
    prf1,
)
from .model import (
    ModelConfig,
    ModelParams,
    SchemaMismatch,
    load_checkpoint,
    save_checkpoint,
    score_graph,
    score_graphs,
)
from .store import (
    RankedQuery,
    RankedResult,
    ScoreStore,
    format_report,
    read_ranked_lists,
    rerank_sim,
    score_batch,
    write_ranked_lists,
)
from .synth import TemplateSpec, generate, read_manifest, split
from .train import LabeledExample, TrainConfig, run_ablation, train, upsample

__version__ = "0.1.0"

__all__ = [
    "DomNode", "DomTree", "EmptyDocument", "Geometry", "NodeType",
    "estimate_geometry", "load_prerendered", "parse_html", "write_prerendered",
    "VersionError",
    "BucketSpec", "EncodedGraph", "FeatureSchema", "FeatureVocab",
    "encode_graph", "fit_bucket_boundaries", "fit_buckets",
    "LayoutGraph", "build_layout_graph", "graph_stats", "read_graphs", "write_graphs",
    "EvalReport", "auc", "dcg_at", "evaluate_scores", "gsb",
    "low_quality_share", "mean_dcg", "pnr", "prf1",
    "ModelConfig", "ModelParams", "SchemaMismatch",
    "load_checkpoint", "save_checkpoint", "score_graph", "score_graphs",
    "RankedQuery", "RankedResult", "ScoreStore", "format_report",
    "read_ranked_lists", "rerank_sim", "score_batch", "write_ranked_lists",
    "TemplateSpec", "generate", "read_manifest", "split",
    "LabeledExample", "TrainConfig", "run_ablation", "train", "upsample",
    "__version__",
]
