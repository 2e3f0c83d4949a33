"""Feature schema: non-uniform bucketing, vocabularies, and index encoding.

Continuous features get quantile-derived cut-points, recomputed over the
remaining mass after each cut so that heavy values (long-tail spikes)
are isolated into their own bucket and every bucket keeps at least
``min_count`` training samples. Discrete features get frequency-filtered
vocabularies with a reserved out-of-vocabulary index. Every feature also
reserves a MISSING index, distinct from OOV: a property that was never
set is a different signal than an unseen value.

Index layout per feature:
  continuous  -> 0..num_buckets-1 are buckets, num_buckets is MISSING
  discrete    -> 0 is OOV, 1 is MISSING, tokens start at 2
  category    -> 0 is OOV, tokens start at 1 (graph level, always present)
"""
from __future__ import annotations

import hashlib
import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import VersionError
from .graph import CONTINUOUS_FEATURES, DISCRETE_FEATURES, LayoutGraph, VIRTUAL_INDEX

__all__ = [
    "EmptyCorpus", "BucketSpec", "FeatureVocab", "FeatureSchema",
    "fit_buckets", "encode_node", "init_node_embedding",
    "EncodedGraph", "encode_graph",
]

SCHEMA_VERSION = 1


class EmptyCorpus(ValueError):
    """fit_buckets needs at least one graph with one DOM node."""


@dataclass(frozen=True)
class BucketSpec:
    feature_name: str
    boundaries: tuple[float, ...]  # strictly increasing; never empty

    @property
    def num_buckets(self) -> int:
        return len(self.boundaries) + 1

    @property
    def missing_index(self) -> int:
        return self.num_buckets

    @property
    def num_indices(self) -> int:
        return self.num_buckets + 1

    def bucket_of(self, value: float) -> int:
        """Monotone: values below the first cut map to 0, then rightward."""
        return bisect_right(self.boundaries, value)


@dataclass(frozen=True)
class FeatureVocab:
    feature_name: str
    tokens: tuple[str, ...]  # indices assigned after the reserved slots
    reserved: int = 2        # 0 = OOV, 1 = MISSING (category vocab uses 1: OOV only)

    OOV = 0

    @property
    def missing_index(self) -> int:
        return 1 if self.reserved >= 2 else self.OOV

    @property
    def num_indices(self) -> int:
        return self.reserved + len(self.tokens)

    def index_of(self, token: str) -> int:
        try:
            return self.reserved + self.tokens.index(token)
        except ValueError:
            return self.OOV


@dataclass
class FeatureSchema:
    """Fitted, frozen mapping from raw feature values to embedding indices."""

    features: list[tuple[str, str, BucketSpec | FeatureVocab]]  # (name, kind, spec)
    category_vocab: FeatureVocab
    embedding_dim: int = 64
    min_count: int = 50
    occupancy: dict[str, list[int]] = field(default_factory=dict)

    def feature_names(self) -> list[str]:
        return [name for name, _, _ in self.features]

    def num_indices(self) -> list[int]:
        return [spec.num_indices for _, _, spec in self.features]

    def category_index(self, category: str) -> int:
        return self.category_vocab.index_of(category.strip().lower())

    def to_json(self) -> dict:
        out = {"version": SCHEMA_VERSION, "embedding_dim": self.embedding_dim,
               "min_count": self.min_count, "features": [],
               "category_vocab": list(self.category_vocab.tokens),
               "occupancy": self.occupancy}
        for name, kind, spec in self.features:
            if kind == "continuous":
                out["features"].append({"name": name, "kind": kind,
                                        "boundaries": list(spec.boundaries)})
            else:
                out["features"].append({"name": name, "kind": kind,
                                        "tokens": list(spec.tokens)})
        return out

    @classmethod
    def from_json(cls, data: dict) -> "FeatureSchema":
        if data.get("version") != SCHEMA_VERSION:
            raise VersionError(f"unsupported schema version {data.get('version')!r}")
        features = []
        for rec in data["features"]:
            if rec["kind"] == "continuous":
                spec = BucketSpec(rec["name"], tuple(float(b) for b in rec["boundaries"]))
            else:
                spec = FeatureVocab(rec["name"], tuple(rec["tokens"]))
            features.append((rec["name"], rec["kind"], spec))
        return cls(features=features,
                   category_vocab=FeatureVocab("category", tuple(data["category_vocab"]),
                                               reserved=1),
                   embedding_dim=int(data["embedding_dim"]),
                   min_count=int(data["min_count"]),
                   occupancy={k: list(v) for k, v in data.get("occupancy", {}).items()})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def hash(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def fit_bucket_boundaries(values: Sequence[float], min_count: int,
                          target_buckets: int) -> tuple[float, ...]:
    """Cut-points for one continuous feature.

    Walks the sorted distinct values, emitting a cut whenever the
    accumulated mass reaches the current per-bucket quota. The quota is
    re-derived from the mass still ahead, so after a heavy value is split
    off the rest is re-quantiled; a cut is only placed if at least
    min_count samples remain for the final bucket.
    """
    arr = np.sort(np.asarray(values, dtype=float))
    distinct, counts = np.unique(arr, return_counts=True)
    if len(distinct) == 0:
        return (0.0,)
    if len(distinct) == 1:
        return (float(distinct[0]),)
    boundaries: list[float] = []
    remaining = int(counts.sum())
    buckets_left = max(2, target_buckets)
    acc = 0
    for i in range(len(distinct) - 1):
        acc += int(counts[i])
        quota = max(min_count, remaining / buckets_left)
        if acc >= quota and remaining - acc >= min_count and len(boundaries) < target_buckets - 1:
            boundaries.append(float(distinct[i + 1]))
            remaining -= acc
            acc = 0
            buckets_left = max(1, buckets_left - 1)
    if not boundaries:
        # Cannot afford a min_count split; cut at the median distinct value
        # to honor num_buckets >= 2.
        boundaries.append(float(distinct[len(distinct) // 2]))
    return tuple(boundaries)


def fit_buckets(corpus: Iterable[LayoutGraph], min_count: int = 50,
                target_buckets: int = 16, embedding_dim: int = 64) -> FeatureSchema:
    """Fit bucket boundaries and vocabularies over a corpus of layout graphs."""
    cont_values: dict[str, list[float]] = {name: [] for name in CONTINUOUS_FEATURES}
    disc_counts: dict[str, dict[str, int]] = {name: {} for name in DISCRETE_FEATURES}
    cat_counts: dict[str, int] = {}
    total_nodes = 0
    for g in corpus:
        cat = g.category.strip().lower()
        cat_counts[cat] = cat_counts.get(cat, 0) + 1
        for idx in range(g.num_nodes):
            if idx == VIRTUAL_INDEX:
                continue
            total_nodes += 1
            raw = g.raw_features[idx]
            for name in CONTINUOUS_FEATURES:
                value = raw.get(name)
                if isinstance(value, (int, float)):
                    cont_values[name].append(float(value))
            for name in DISCRETE_FEATURES:
                value = raw.get(name)
                if isinstance(value, str):
                    counts = disc_counts[name]
                    counts[value] = counts.get(value, 0) + 1
    if total_nodes == 0:
        raise EmptyCorpus("no DOM nodes seen while fitting")

    features: list[tuple[str, str, BucketSpec | FeatureVocab]] = []
    occupancy: dict[str, list[int]] = {}
    for name in CONTINUOUS_FEATURES:
        spec = BucketSpec(name, fit_bucket_boundaries(cont_values[name],
                                                      min_count, target_buckets))
        features.append((name, "continuous", spec))
        buckets = [0] * spec.num_buckets
        for v in cont_values[name]:
            buckets[spec.bucket_of(v)] += 1
        occupancy[name] = buckets
    for name in DISCRETE_FEATURES:
        kept = sorted((t for t, c in disc_counts[name].items() if c >= min_count),
                      key=lambda t: (-disc_counts[name][t], t))
        vocab = FeatureVocab(name, tuple(kept))
        features.append((name, "discrete", vocab))
        occupancy[name] = [disc_counts[name][t] for t in kept]

    categories = sorted(cat_counts, key=lambda t: (-cat_counts[t], t))
    return FeatureSchema(
        features=features,
        category_vocab=FeatureVocab("category", tuple(categories), reserved=1),
        embedding_dim=embedding_dim,
        min_count=min_count,
        occupancy=occupancy,
    )


def encode_node(raw: dict, node_type: str, schema: FeatureSchema) -> list[int]:
    """Raw feature map -> per-feature embedding indices; total over any input.

    The schema applies the same feature list to every node type; features
    that do not apply fall out as MISSING. `node_type` is accepted for
    future per-type feature subsets but does not alter the encoding.
    """
    del node_type
    indices: list[int] = []
    for name, kind, spec in schema.features:
        value = raw.get(name)
        if kind == "continuous":
            if isinstance(value, (int, float)):
                indices.append(spec.bucket_of(float(value)))
            else:
                indices.append(spec.missing_index)
        else:
            if isinstance(value, str):
                indices.append(spec.index_of(value))
            else:
                indices.append(spec.missing_index)
    return indices


def init_node_embedding(indices: Sequence[int], tables: Sequence[np.ndarray]) -> np.ndarray:
    """h^(0) for one node: sum of the selected row of each feature table."""
    if len(indices) != len(tables):
        raise ValueError(f"{len(indices)} indices for {len(tables)} tables")
    out = np.zeros(tables[0].shape[1]) if tables else np.zeros(0)
    for idx, table in zip(indices, tables):
        assert 0 <= idx < table.shape[0], f"index {idx} outside table of {table.shape[0]}"
        out = out + table[idx]
    return out


@dataclass
class EncodedGraph:
    """A LayoutGraph reduced to the arrays the model consumes."""

    num_nodes: int                 # includes the virtual node at index 0
    edge_src: np.ndarray
    edge_dst: np.ndarray
    feature_indices: np.ndarray    # [num_features, num_nodes-1] for DOM nodes
    category_index: int
    url: str = ""
    root_index: int = 1

    @property
    def num_dom_nodes(self) -> int:
        return self.num_nodes - 1


def encode_graph(g: LayoutGraph, schema: FeatureSchema) -> EncodedGraph:
    src = np.array([s for s, _ in g.edges], dtype=np.int64)
    dst = np.array([d for _, d in g.edges], dtype=np.int64)
    per_node = [encode_node(g.raw_features[i], g.node_types[i], schema)
                for i in range(1, g.num_nodes)]
    matrix = (np.array(per_node, dtype=np.int64).T if per_node
              else np.zeros((len(schema.features), 0), dtype=np.int64))
    return EncodedGraph(
        num_nodes=g.num_nodes,
        edge_src=src,
        edge_dst=dst,
        feature_indices=matrix,
        category_index=schema.category_index(g.category),
        url=g.url,
        root_index=g.root_index,
    )
