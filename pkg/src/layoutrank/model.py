"""Graph scoring models: attention and isomorphism message passing.

A batch of encoded graphs is laid out as one disjoint union: the per-graph
virtual hubs occupy rows 0..B-1, every DOM node follows, and the edge lists
are shifted accordingly. Message passing then needs no padding, and the
readouts are single gathers (virtual hub) or segment means (DOM nodes).

Per layer, node n aggregates its neighbors m with attention

    h_n' = elu( sum_m alpha_nm  (W1 h_m) )
    alpha_nm = softmax_m( leaky_relu( a . [W2 h_n || W2 h_m] ) )

or, for the isomorphism variant, through a two-layer perceptron of the
epsilon-weighted sum  MLP((1 + eps) h_n + sum_m h_m).  The graph embedding
(virtual hub state or DOM-node mean) is shifted by a category embedding
before the scalar scoring head.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import VersionError
from .features import EncodedGraph, FeatureSchema

__all__ = [
    "ARCHS", "READOUTS", "HEADS", "SchemaMismatch",
    "ModelConfig", "ModelParams",
    "forward_batch", "score_graph", "score_graphs",
    "save_checkpoint", "load_checkpoint",
]

ARCHS = ("gat", "gin")
READOUTS = ("virtual", "mean_pool")
HEADS = ("sigmoid", "linear")
CHECKPOINT_VERSION = 1


class SchemaMismatch(VersionError):
    """Checkpoint was trained against a different feature schema."""


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "gat"
    readout: str = "virtual"
    use_category: bool = True
    hidden_dim: int = 64
    num_layers: int = 5
    dropout: float = 0.2
    leaky_slope: float = 0.2
    head: str = "sigmoid"

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ValueError("hidden_dim and num_layers must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GatLayer:
    w1: T.Tensor    # [d, d] message transform
    w2: T.Tensor    # [d, d] attention transform
    attn: T.Tensor  # [2d, 1] attention vector

    def tensors(self) -> list[T.Tensor]:
        return [self.w1, self.w2, self.attn]


@dataclass
class GinLayer:
    eps: T.Tensor    # [1, 1] self-loop weight
    w_in: T.Tensor   # [d, d]
    b_in: T.Tensor   # [1, d]
    w_out: T.Tensor  # [d, d]
    b_out: T.Tensor  # [1, d]

    def tensors(self) -> list[T.Tensor]:
        return [self.eps, self.w_in, self.b_in, self.w_out, self.b_out]


@dataclass
class ModelParams:
    config: ModelConfig
    feature_sizes: list[int]
    category_size: int
    feature_tables: list[T.Tensor] = field(default_factory=list)
    virtual_init: T.Tensor | None = None
    layers: list[GatLayer | GinLayer] = field(default_factory=list)
    category_table: T.Tensor | None = None
    head_w: T.Tensor | None = None
    head_b: T.Tensor | None = None

    @classmethod
    def init(cls, config: ModelConfig, schema: FeatureSchema, seed: int = 0) -> "ModelParams":
        if schema.embedding_dim != config.hidden_dim:
            raise ValueError(f"schema dim {schema.embedding_dim} != model dim {config.hidden_dim}")
        rng = np.random.default_rng(seed)
        d = config.hidden_dim
        params = cls(config=config, feature_sizes=schema.num_indices(),
                     category_size=schema.category_vocab.num_indices)

        def leaf(data, name):
            return T.Tensor(np.asarray(data, dtype=float), requires_grad=True, name=name)

        for name, size in zip(schema.feature_names(), params.feature_sizes):
            params.feature_tables.append(
                leaf(rng.normal(0.0, 0.1, size=(size, d)), f"table.{name}"))
        params.virtual_init = leaf(rng.normal(0.0, 0.1, size=(1, d)), "virtual_init")
        for k in range(config.num_layers):
            if config.arch == "gat":
                params.layers.append(GatLayer(
                    w1=leaf(_glorot(rng, d, d), f"layer{k}.w1"),
                    w2=leaf(_glorot(rng, d, d), f"layer{k}.w2"),
                    attn=leaf(_glorot(rng, 2 * d, 1), f"layer{k}.attn")))
            else:
                params.layers.append(GinLayer(
                    eps=leaf(np.zeros((1, 1)), f"layer{k}.eps"),
                    w_in=leaf(_glorot(rng, d, d), f"layer{k}.w_in"),
                    b_in=leaf(np.zeros((1, d)), f"layer{k}.b_in"),
                    w_out=leaf(_glorot(rng, d, d), f"layer{k}.w_out"),
                    b_out=leaf(np.zeros((1, d)), f"layer{k}.b_out")))
        if config.use_category:
            params.category_table = leaf(
                rng.normal(0.0, 0.1, size=(params.category_size, d)), "table.category")
        params.head_w = leaf(_glorot(rng, d, 1), "head.w")
        params.head_b = leaf(np.zeros((1, 1)), "head.b")
        return params

    def all(self) -> list[T.Tensor]:
        out = list(self.feature_tables) + [self.virtual_init]
        for layer in self.layers:
            out.extend(layer.tensors())
        if self.category_table is not None:
            out.append(self.category_table)
        out.extend([self.head_w, self.head_b])
        return out

    def num_parameters(self) -> int:
        return sum(t.size for t in self.all())


def _gat_layer(tape, h, src, dst, num_nodes, layer: GatLayer, slope, capture=None):
    z = T.matmul(tape, h, layer.w2)
    pair = T.concat_cols(tape, T.gather_rows(tape, z, dst), T.gather_rows(tape, z, src))
    logits = T.leaky_relu(tape, T.matmul(tape, pair, layer.attn), slope)
    alpha = T.segment_softmax(tape, T.reshape(tape, logits, (len(src),)), dst, num_nodes)
    if capture is not None:
        capture.append(alpha.data.copy())
    messages = T.gather_rows(tape, T.matmul(tape, h, layer.w1), src)
    agg = T.segment_sum(tape, T.scale_rows(tape, messages, alpha), dst, num_nodes)
    return T.elu(tape, agg)


def _gin_layer(tape, h, src, dst, num_nodes, layer: GinLayer):
    agg = T.segment_sum(tape, T.gather_rows(tape, h, src), dst, num_nodes)
    one = T.Tensor(np.ones((1, 1)))
    mixed = T.add(tape, T.mul(tape, h, T.add(tape, one, layer.eps)), agg)
    hidden = T.elu(tape, T.add(tape, T.matmul(tape, mixed, layer.w_in), layer.b_in))
    return T.add(tape, T.matmul(tape, hidden, layer.w_out), layer.b_out)


def _batch_layout(graphs: Sequence[EncodedGraph]):
    """Disjoint-union indices: virtual hubs first, then all DOM nodes."""
    batch = len(graphs)
    offsets = []
    total = 0
    for g in graphs:
        if g.num_dom_nodes < 1:
            raise ValueError(f"graph {g.url!r} has no DOM nodes")
        offsets.append(total)
        total += g.num_dom_nodes
    src_parts, dst_parts, graph_of_dom = [], [], []
    for i, g in enumerate(graphs):
        shift = batch + offsets[i] - 1  # local DOM index 1 -> global batch+offset
        src_parts.append(np.where(g.edge_src == 0, i, g.edge_src + shift))
        dst_parts.append(np.where(g.edge_dst == 0, i, g.edge_dst + shift))
        graph_of_dom.extend([i] * g.num_dom_nodes)
    return (np.concatenate(src_parts), np.concatenate(dst_parts),
            np.asarray(graph_of_dom), total)


def forward_batch(params: ModelParams, graphs: Sequence[EncodedGraph],
                  tape: T.Tape | None = None, training: bool = False,
                  rng: np.random.Generator | None = None,
                  capture: dict | None = None) -> T.Tensor:
    """Scores for a batch of graphs, shape [batch, 1]."""
    config = params.config
    if not graphs:
        raise ValueError("empty batch")
    if training and config.dropout > 0.0 and rng is None:
        raise ValueError("training with dropout needs an rng")
    batch = len(graphs)
    src, dst, graph_of_dom, total_dom = _batch_layout(graphs)
    num_nodes = batch + total_dom

    joined = np.concatenate([g.feature_indices for g in graphs], axis=1)
    dom_h = None
    for table, indices in zip(params.feature_tables, joined):
        rows = T.gather_rows(tape, table, indices)
        dom_h = rows if dom_h is None else T.add(tape, dom_h, rows)
    virt_h = T.gather_rows(tape, params.virtual_init, np.zeros(batch, dtype=np.int64))
    h = T.concat_rows(tape, virt_h, dom_h)

    if capture is not None:
        capture["edges"] = (src, dst)
        capture["attention"] = []
    for layer in params.layers:
        if training and config.dropout > 0.0:
            h = T.dropout(tape, h, config.dropout, training=True, rng=rng)
        if config.arch == "gat":
            alphas = capture["attention"] if capture is not None else None
            h = _gat_layer(tape, h, src, dst, num_nodes, layer,
                           config.leaky_slope, capture=alphas)
        else:
            h = _gin_layer(tape, h, src, dst, num_nodes, layer)
    if capture is not None:
        capture["node_states"] = h.data.copy()

    if config.readout == "virtual":
        graph_h = T.gather_rows(tape, h, np.arange(batch, dtype=np.int64))
    else:
        dom_part = T.gather_rows(tape, h, np.arange(batch, num_nodes, dtype=np.int64))
        sums = T.segment_sum(tape, dom_part, graph_of_dom, batch)
        inv_counts = T.Tensor(1.0 / np.bincount(graph_of_dom, minlength=batch))
        graph_h = T.scale_rows(tape, sums, inv_counts)

    if config.use_category:
        cat_idx = np.array([g.category_index for g in graphs], dtype=np.int64)
        graph_h = T.add(tape, graph_h, T.gather_rows(tape, params.category_table, cat_idx))

    logits = T.add(tape, T.matmul(tape, graph_h, params.head_w), params.head_b)
    return T.sigmoid(tape, logits) if config.head == "sigmoid" else logits


def score_graph(params: ModelParams, graph: EncodedGraph) -> float:
    return float(forward_batch(params, [graph]).data[0, 0])


def score_graphs(params: ModelParams, graphs: Sequence[EncodedGraph],
                 batch_size: int = 64) -> np.ndarray:
    """Eval-mode scores for many graphs, batched for speed."""
    out = np.empty(len(graphs))
    for start in range(0, len(graphs), batch_size):
        chunk = graphs[start:start + batch_size]
        out[start:start + len(chunk)] = forward_batch(params, chunk).data[:, 0]
    return out


def save_checkpoint(path, params: ModelParams, schema_hash: str,
                    meta: dict | None = None) -> None:
    arrays = {t.name: t.data.tolist() for t in params.all()}
    if len(arrays) != len(params.all()):
        raise ValueError("parameter names collide")
    data = {
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_json(),
        "schema_hash": schema_hash,
        "feature_order": [t.name for t in params.feature_tables],
        "feature_sizes": params.feature_sizes,
        "category_size": params.category_size,
        "arrays": arrays,
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, schema: FeatureSchema | None = None) -> tuple[ModelParams, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("version") != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {data.get('version')!r}")
    if schema is not None and data["schema_hash"] != schema.hash():
        raise SchemaMismatch(
            f"checkpoint schema {data['schema_hash']} != current {schema.hash()}")
    config = ModelConfig.from_json(data["config"])
    params = ModelParams(config=config, feature_sizes=list(data["feature_sizes"]),
                         category_size=int(data["category_size"]))

    def leaf(name):
        return T.Tensor(np.asarray(data["arrays"][name], dtype=float),
                        requires_grad=True, name=name)

    params.feature_tables = [leaf(n) for n in data["feature_order"]]
    params.virtual_init = leaf("virtual_init")
    for k in range(config.num_layers):
        if config.arch == "gat":
            params.layers.append(GatLayer(leaf(f"layer{k}.w1"), leaf(f"layer{k}.w2"),
                                          leaf(f"layer{k}.attn")))
        else:
            params.layers.append(GinLayer(leaf(f"layer{k}.eps"), leaf(f"layer{k}.w_in"),
                                          leaf(f"layer{k}.b_in"), leaf(f"layer{k}.w_out"),
                                          leaf(f"layer{k}.b_out")))
    if config.use_category:
        params.category_table = leaf("table.category")
    params.head_w = leaf("head.w")
    params.head_b = leaf("head.b")
    return params, data.get("meta", {})
