"""Layout graphs: DOM tree plus a global virtual hub node.

Construction follows a DFS over the tree that records, for every child,
an edge from the virtual node to the child and an edge from the child to
its parent, seeded with (virtual, root). The raw edge stream contains
duplicates; the output is deduplicated and then symmetrized, so each
undirected adjacency appears in both directions exactly once. The virtual
node always sits at index 0 and DOM node k maps to index k+1.

Per-node raw features cover location (box geometry, position type),
content (word count, typography), layout (box-model and visibility
styles) and the tag name. The webpage category stays a graph-level
attribute.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .dom import DomTree, NodeType, TAG_DEFAULT_STYLE

__all__ = [
    "LayoutGraph", "build_layout_graph", "graph_stats",
    "CONTINUOUS_FEATURES", "DISCRETE_FEATURES",
    "extract_raw_features", "write_graphs", "read_graphs",
]

VIRTUAL_INDEX = 0

CONTINUOUS_FEATURES = (
    "height", "width", "xpos", "ypos", "num_words", "font_size",
    "line_height", "border", "padding", "margin", "outline_width",
)
DISCRETE_FEATURES = (
    "position_type", "font_style", "font_weight", "alignment",
    "visibility", "display_style", "outline_style", "tag_name",
)

# style property backing each feature; geometry/text features are direct.
_STYLE_OF_CONTINUOUS = {
    "font_size": "font-size",
    "line_height": "line-height",
    "border": "border",
    "padding": "padding",
    "margin": "margin",
    "outline_width": "outline-width",
}
_STYLE_OF_DISCRETE = {
    "position_type": "position",
    "font_style": "font-style",
    "font_weight": "font-weight",
    "alignment": "text-align",
    "visibility": "visibility",
    "display_style": "display",
    "outline_style": "outline-style",
}

_NUM_RE = re.compile(r"-?\d+(?:\.\d+)?")


def _first_number(raw: str) -> float | None:
    m = _NUM_RE.search(raw)
    return float(m.group()) if m else None


def extract_raw_features(tree: DomTree, node_id: int) -> dict[str, float | str]:
    """Table of raw feature values for one DOM node; absent keys mean missing."""
    node = tree.nodes[node_id]
    defaults = TAG_DEFAULT_STYLE(node.tag_name)
    resolved = {**defaults, **node.style}
    raw: dict[str, float | str] = {
        "height": node.geometry.height,
        "width": node.geometry.width,
        "xpos": node.geometry.xpos,
        "ypos": node.geometry.ypos,
        "num_words": float(node.text_length),
    }
    for feature, prop in _STYLE_OF_CONTINUOUS.items():
        value = resolved.get(prop)
        if value is None:
            continue
        number = _first_number(value)
        if number is not None:
            raw[feature] = number
    for feature, prop in _STYLE_OF_DISCRETE.items():
        value = resolved.get(prop)
        if value is not None:
            raw[feature] = value.strip().lower()
    raw["tag_name"] = node.tag_name
    # border shorthand may carry no width keyword; border-width wins if set.
    bw = node.style.get("border-width")
    if bw is not None and _first_number(bw) is not None:
        raw["border"] = _first_number(bw)
    return raw


@dataclass
class LayoutGraph:
    num_nodes: int
    edges: list[tuple[int, int]]
    node_types: list[str]
    raw_features: list[dict[str, float | str]]
    category: str = ""
    url: str = ""
    root_index: int = 1  # graph index of the DOM root

    def virtual_degree(self) -> int:
        return sum(1 for s, d in self.edges if s == VIRTUAL_INDEX)

    def neighbors(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {i: set() for i in range(self.num_nodes)}
        for s, d in self.edges:
            out[d].add(s)
        return out


def build_layout_graph(tree: DomTree) -> LayoutGraph:
    """Construct the virtual-node layout graph for one DOM tree."""
    directed: set[tuple[int, int]] = set()
    parents = tree.parent_map()
    for node in tree.nodes:
        g = node.node_id + 1
        directed.add((VIRTUAL_INDEX, g))
        parent = parents[node.node_id]
        if parent is not None:
            directed.add((g, parent + 1))
    edges = sorted(directed | {(d, s) for s, d in directed})
    node_types = [NodeType.VIRTUAL.value] + [n.node_type.value for n in tree.nodes]
    raw = [{}] + [extract_raw_features(tree, n.node_id) for n in tree.nodes]
    return LayoutGraph(
        num_nodes=len(tree.nodes) + 1,
        edges=edges,
        node_types=node_types,
        raw_features=raw,
        category=tree.category,
        url=tree.source_url,
        root_index=tree.root_id + 1,
    )


def graph_stats(g: LayoutGraph) -> dict:
    """num_nodes / num_edges (directed entries) / tree depth / type histogram."""
    undirected = {(s, d) for s, d in g.edges if s < d}
    tree_adj: dict[int, list[int]] = {i: [] for i in range(g.num_nodes)}
    for s, d in undirected:
        if s != VIRTUAL_INDEX:
            tree_adj[s].append(d)
            tree_adj[d].append(s)
    depth = 0
    seen = {g.root_index}
    frontier = [(g.root_index, 0)]
    while frontier:
        nid, level = frontier.pop()
        depth = max(depth, level)
        for other in tree_adj[nid]:
            if other not in seen:
                seen.add(other)
                frontier.append((other, level + 1))
    histogram: dict[str, int] = {}
    for t in g.node_types:
        histogram[t] = histogram.get(t, 0) + 1
    return {
        "num_nodes": g.num_nodes,
        "num_edges": len(g.edges),
        "depth": depth,
        "type_histogram": histogram,
    }


def write_graphs(graphs: Iterable[LayoutGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(json.dumps({
                "url": g.url,
                "category": g.category,
                "num_nodes": g.num_nodes,
                "edges": [[s, d] for s, d in g.edges],
                "node_types": g.node_types,
                "raw_features": g.raw_features,
                "root_index": g.root_index,
            }) + "\n")


def read_graphs(path) -> Iterator[LayoutGraph]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            yield LayoutGraph(
                num_nodes=rec["num_nodes"],
                edges=[(s, d) for s, d in rec["edges"]],
                node_types=list(rec["node_types"]),
                raw_features=list(rec["raw_features"]),
                category=rec.get("category", ""),
                url=rec.get("url", ""),
                root_index=rec.get("root_index", 1),
            )
