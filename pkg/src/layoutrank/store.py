"""Score persistence and ranked-list blending.

The score store is a TSV with one header comment pinning the feature-schema
fingerprint and model version. Rows are sorted by URL and floats written
with repr, so rescoring the same corpus with the same model reproduces the
file byte for byte — nothing time- or environment-dependent is recorded.

The rerank simulation blends a stored quality score into an existing
ranking:  blended = (1 - w) * relevance + w * quality.  Sorting is stable,
so w = 0 reproduces the input ordering exactly, tied blends keep their
original relative order, and the gain is read off as DCG over the human
relevance grades before and after.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

from .errors import VersionError
from .features import EncodedGraph, FeatureSchema
from .metrics import dcg_at
from .model import ModelParams, SchemaMismatch, score_graphs

__all__ = [
    "StoreError", "BadWeight", "MetricMismatch", "ScoreRow", "ScoreStore",
    "score_batch", "read_ranked_lists", "write_ranked_lists",
    "RankedQuery", "RankedResult", "rerank_sim", "format_report",
]

logger = logging.getLogger(__name__)

STORE_VERSION = 1
_HEADER_PREFIX = "# layout-scores"


class StoreError(ValueError):
    """Malformed score store; `.line` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class BadWeight(ValueError):
    """Blend weight must lie in [0, 1]."""


class MetricMismatch(ValueError):
    """Two reports can only be compared over the same metric names."""


@dataclass(frozen=True)
class ScoreRow:
    url: str
    score: float
    model_version: str


@dataclass
class ScoreStore:
    schema_hash: str
    model_version: str
    rows: list[ScoreRow] = field(default_factory=list)

    def lookup(self) -> dict[str, float]:
        return {row.url: row.score for row in self.rows}

    def write(self, path) -> None:
        ordered = sorted(self.rows, key=lambda r: r.url)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{_HEADER_PREFIX} v{STORE_VERSION} "
                     f"schema={self.schema_hash} model={self.model_version}\n")
            for row in ordered:
                fh.write(f"{row.url}\t{row.score!r}\t{row.model_version}\n")

    @classmethod
    def read(cls, path) -> "ScoreStore":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith(_HEADER_PREFIX):
            raise StoreError("missing header", line=1)
        fields = lines[0][len(_HEADER_PREFIX):].split()
        if not fields or fields[0] != f"v{STORE_VERSION}":
            raise VersionError(f"unsupported store version {fields[:1]}")
        tags = dict(f.split("=", 1) for f in fields[1:] if "=" in f)
        if "schema" not in tags or "model" not in tags:
            raise StoreError("header must carry schema= and model=", line=1)
        store = cls(schema_hash=tags["schema"], model_version=tags["model"])
        seen: set[str] = set()
        for lineno, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise StoreError(f"expected 3 tab-separated fields, got {len(parts)}",
                                 line=lineno)
            url, raw_score, version = parts
            try:
                score = float(raw_score)
            except ValueError:
                raise StoreError(f"bad score {raw_score!r}", line=lineno) from None
            if url in seen:
                raise StoreError(f"duplicate url {url!r}", line=lineno)
            seen.add(url)
            store.rows.append(ScoreRow(url, score, version))
        return store


def score_batch(params: ModelParams, schema: FeatureSchema,
                graphs: Sequence[EncodedGraph], model_version: str = "dev") -> ScoreStore:
    """Score graphs encoded with `schema` into a store stamped with its hash."""
    if params.feature_sizes != schema.num_indices():
        raise SchemaMismatch(
            f"model expects feature sizes {params.feature_sizes}, "
            f"schema provides {schema.num_indices()}")
    scores = score_graphs(params, list(graphs))
    rows = [ScoreRow(g.url, float(s), model_version) for g, s in zip(graphs, scores)]
    return ScoreStore(schema_hash=schema.hash(), model_version=model_version, rows=rows)


@dataclass(frozen=True)
class RankedResult:
    url: str
    relevance: float   # retrieval score the ranking came from
    rel_grade: float   # human relevance grade, used for DCG


@dataclass(frozen=True)
class RankedQuery:
    query: str
    results: tuple[RankedResult, ...]


def read_ranked_lists(path) -> list[RankedQuery]:
    queries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                results = tuple(RankedResult(r["url"], float(r["relevance"]),
                                             float(r["rel_grade"]))
                                for r in record["results"])
                queries.append(RankedQuery(str(record["query"]), results))
            except (KeyError, TypeError, ValueError) as exc:
                raise StoreError(f"bad ranked-list record: {exc}", line=lineno) from None
    return queries


def write_ranked_lists(queries: Sequence[RankedQuery], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            record = {"query": q.query,
                      "results": [{"url": r.url, "relevance": r.relevance,
                                   "rel_grade": r.rel_grade} for r in q.results]}
            fh.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class QueryRerank:
    query: str
    before: RankedQuery
    after: RankedQuery
    dcg_before: float
    dcg_after: float
    moves: list[tuple[str, int, int]]  # url, old position, new position (0-based)


@dataclass
class RerankOutcome:
    weight: float
    queries: list[QueryRerank]
    mean_dcg_before: float
    mean_dcg_after: float

    @property
    def delta(self) -> float:
        return self.mean_dcg_after - self.mean_dcg_before


def rerank_sim(queries: Sequence[RankedQuery], store: ScoreStore,
               weight: float, p: int = 4,
               default_quality: float = 0.5) -> RerankOutcome:
    """Stable rerank of each query by blended score, with DCG@p before/after."""
    if not 0.0 <= weight <= 1.0:
        raise BadWeight(f"weight must be in [0, 1], got {weight}")
    quality = store.lookup()
    outcomes = []
    for q in queries:
        blended = []
        for r in q.results:
            if r.url in quality:
                blend = (1.0 - weight) * r.relevance + weight * quality[r.url]
            else:
                logger.warning("query %r: no stored score for %s; using %.2f",
                               q.query, r.url, default_quality)
                blend = (1.0 - weight) * r.relevance + weight * default_quality
            blended.append(blend)
        order = sorted(range(len(q.results)), key=lambda i: -blended[i])
        after = RankedQuery(q.query, tuple(q.results[i] for i in order))
        moves = [(q.results[i].url, i, new) for new, i in enumerate(order) if new != i]
        outcomes.append(QueryRerank(
            query=q.query, before=q, after=after,
            dcg_before=dcg_at([r.rel_grade for r in q.results], p),
            dcg_after=dcg_at([r.rel_grade for r in after.results], p),
            moves=moves))
    n = len(outcomes)
    if n == 0:
        raise ValueError("no queries to rerank")
    return RerankOutcome(
        weight=weight, queries=outcomes,
        mean_dcg_before=sum(o.dcg_before for o in outcomes) / n,
        mean_dcg_after=sum(o.dcg_after for o in outcomes) / n)


def format_report(base: dict[str, float], new: dict[str, float],
                  base_name: str = "base", new_name: str = "new") -> str:
    """Fixed-width metric table with signed percentage deltas."""
    if set(base) != set(new):
        only_base = sorted(set(base) - set(new))
        only_new = sorted(set(new) - set(base))
        raise MetricMismatch(f"metrics differ: base-only {only_base}, new-only {only_new}")
    name_w = max(len("metric"), *(len(k) for k in base)) if base else len("metric")
    lines = [f"{'metric':<{name_w}}  {base_name:>12}  {new_name:>12}  {'delta':>8}"]
    for key in sorted(base):
        b, n = base[key], new[key]
        if b == 0.0:
            delta = "n/a"
        else:
            delta = f"{(n - b) / abs(b) * 100.0:+.2f}%"
        lines.append(f"{key:<{name_w}}  {b:>12.4f}  {n:>12.4f}  {delta:>8}")
    return "\n".join(lines)
