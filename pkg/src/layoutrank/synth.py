"""Synthetic labeled pages with known structure, geometry, and labels.

Three page profiles with layout-visible quality differences:

  rich     label 1  headline, sections of heading + image + paragraph,
                    and an interactive footer form
  thin     label 0  a single shallow branch with under 30 words
  chaotic  label 0  absolutely positioned boxes at overlapping offsets
                    with wildly inconsistent font sizes

Every page is built from closed-form patterns, so the generator knows each
node's flow geometry by construction (block stacking and word-wrap
arithmetic, not by running the layout engine). The manifest records that
ground truth per node; tests replay the HTML through the parser and layout
estimate and must reproduce it exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dom import DomNode, DomTree, Geometry, node_type_for_tag, write_prerendered
from .errors import VersionError

__all__ = [
    "BadSpec", "BadRatios", "TemplateSpec", "generate", "split",
    "read_manifest", "PROFILES",
]

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
PROFILES = ("rich", "thin", "chaotic")

_VIEW_W = 1280.0
_WPL = 21            # words per line at full width: floor(1280 / 60)
_LINE = 16.0
_IMG_W, _IMG_H = 150.0, 100.0
_INPUT_W, _BUTTON_W, _WIDGET_H = 160.0, 80.0, 24.0

_WORDS = (
    "layout", "page", "reader", "section", "content", "detail", "note",
    "figure", "update", "report", "item", "review", "value", "story",
    "record", "topic", "entry", "result", "summary", "guide",
)


class BadSpec(ValueError):
    """Template parameters out of range."""


class BadRatios(ValueError):
    """Split ratios must be three non-negative numbers summing to one."""


@dataclass(frozen=True)
class TemplateSpec:
    categories: tuple[str, ...] = ("news", "video", "shopping", "forum", "reference")
    rich_fraction: float = 0.3
    sections: tuple[int, int] = (2, 4)        # inclusive range for rich pages
    chaotic_boxes: tuple[int, int] = (4, 8)   # inclusive range of floating boxes
    seed: int = 0

    def __post_init__(self):
        if not self.categories or any(not c for c in self.categories):
            raise BadSpec("categories must be non-empty strings")
        if not 0.0 <= self.rich_fraction <= 1.0:
            raise BadSpec(f"rich_fraction must be in [0, 1], got {self.rich_fraction}")
        for lo, hi in (self.sections, self.chaotic_boxes):
            if lo < 1 or hi < lo:
                raise BadSpec(f"bad range ({lo}, {hi})")


@dataclass
class _El:
    """One generated element plus the geometry it was built to have."""
    tag: str
    style: dict[str, str] = field(default_factory=dict)
    words: int = 0
    children: list["_El"] = field(default_factory=list)
    geom: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)  # h, w, x, y


def _text_rows(words: int, width: float) -> float:
    per_line = max(1, int(width // 60.0))
    return math.ceil(words / per_line) * _LINE if words else 0.0


def _build_thin(rng: np.random.Generator) -> _El:
    n_words = int(rng.integers(5, 28))
    h = _text_rows(n_words, _VIEW_W)
    p = _El("p", words=n_words, geom=(h, _VIEW_W, 0.0, 0.0))
    box = _El("div", children=[p], geom=(h, _VIEW_W, 0.0, 0.0))
    body = _El("body", children=[box], geom=(h, _VIEW_W, 0.0, 0.0))
    return _El("html", children=[body], geom=(h, _VIEW_W, 0.0, 0.0))


def _build_rich(rng: np.random.Generator, spec: TemplateSpec) -> _El:
    y = 0.0
    title_words = int(rng.integers(3, 8))
    title_h = _text_rows(title_words, _VIEW_W)
    h1 = _El("h1", words=title_words, geom=(title_h, _VIEW_W, 0.0, y))
    header = _El("div", children=[h1], geom=(title_h, _VIEW_W, 0.0, y))
    y += title_h

    sections = []
    for _ in range(int(rng.integers(spec.sections[0], spec.sections[1] + 1))):
        head_words = int(rng.integers(2, 6))
        para_words = int(rng.integers(30, 90))
        head_h = _text_rows(head_words, _VIEW_W)
        para_h = _text_rows(para_words, _VIEW_W)
        h2 = _El("h2", words=head_words, geom=(head_h, _VIEW_W, 0.0, y))
        img = _El("img", geom=(_IMG_H, _IMG_W, 0.0, y + head_h))
        p = _El("p", words=para_words,
                geom=(para_h, _VIEW_W, 0.0, y + head_h + _IMG_H))
        sec_h = head_h + _IMG_H + para_h
        sections.append(_El("div", children=[h2, img, p],
                            geom=(sec_h, _VIEW_W, 0.0, y)))
        y += sec_h

    entry = _El("input", geom=(_WIDGET_H, _INPUT_W, 0.0, y))
    go = _El("button", geom=(_WIDGET_H, _BUTTON_W, _INPUT_W, y))
    form = _El("form", children=[entry, go], geom=(_WIDGET_H, _VIEW_W, 0.0, y))
    footer = _El("div", children=[form], geom=(_WIDGET_H, _VIEW_W, 0.0, y))
    y += _WIDGET_H

    body = _El("body", children=[header, *sections, footer],
               geom=(y, _VIEW_W, 0.0, 0.0))
    return _El("html", children=[body], geom=(y, _VIEW_W, 0.0, 0.0))


def _build_chaotic(rng: np.random.Generator, spec: TemplateSpec) -> _El:
    boxes = []
    count = int(rng.integers(spec.chaotic_boxes[0], spec.chaotic_boxes[1] + 1))
    for i in range(count):
        left = float(rng.integers(0, 600))
        top = float(rng.integers(0, 500))
        width = float(rng.integers(200, 500))
        height = float(rng.integers(150, 400))
        font = (9, 37)[i] if i < 2 else int(rng.integers(8, 41))  # force a clash
        n_words = int(rng.integers(3, 11))
        style = {"position": "absolute", "left": f"{left:g}px", "top": f"{top:g}px",
                 "width": f"{width:g}px", "height": f"{height:g}px",
                 "font-size": f"{font}px"}
        p = _El("p", words=n_words,
                geom=(_text_rows(n_words, width), width, left, top))
        boxes.append(_El("div", style=style, children=[p],
                         geom=(height, width, left, top)))
    body = _El("body", children=boxes, geom=(0.0, _VIEW_W, 0.0, 0.0))
    return _El("html", children=[body], geom=(0.0, _VIEW_W, 0.0, 0.0))


def _render_html(el: _El, rng: np.random.Generator) -> str:
    parts = [f"<{el.tag}"]
    if el.style:
        declarations = "; ".join(f"{k}: {v}" for k, v in el.style.items())
        parts.append(f' style="{declarations}"')
    parts.append(">")
    if el.words:
        picks = rng.integers(0, len(_WORDS), size=el.words)
        parts.append(" ".join(_WORDS[j] for j in picks))
    for child in el.children:
        parts.append(_render_html(child, rng))
    if el.tag not in ("img", "input"):
        parts.append(f"</{el.tag}>")
    return "".join(parts)


def _flatten(el: _El):
    """Preorder walk matching the parser's id assignment."""
    order: list[tuple[_El, int | None]] = []

    def visit(node: _El, parent: int | None):
        my_id = len(order)
        order.append((node, parent))
        for child in node.children:
            visit(child, my_id)

    visit(el, None)
    return order


def _as_tree(el: _El, url: str, category: str) -> DomTree:
    order = _flatten(el)
    nodes = []
    for node_id, (e, parent) in enumerate(order):
        h, w, x, y = e.geom
        nodes.append(DomNode(
            node_id=node_id, tag_name=e.tag, node_type=node_type_for_tag(e.tag),
            style=dict(e.style), geometry=Geometry(h, w, x, y),
            text_length=e.words, children=[]))
    for node_id, (_, parent) in enumerate(order):
        if parent is not None:
            nodes[parent].children.append(node_id)
    return DomTree(nodes=nodes, root_id=0, source_url=url, category=category)


def generate(spec: TemplateSpec, n: int, out_dir,
             emit_prerendered: bool = False) -> dict:
    """Write n labeled pages plus a ground-truth manifest; returns the manifest."""
    if n < 1:
        raise BadSpec(f"need at least one document, got {n}")
    out = Path(out_dir)
    (out / "html").mkdir(parents=True, exist_ok=True)
    if emit_prerendered:
        (out / "prerendered").mkdir(parents=True, exist_ok=True)

    num_rich = round(n * spec.rich_fraction)
    num_thin = (n - num_rich + 1) // 2
    num_chaotic = n - num_rich - num_thin
    profiles = ["rich"] * num_rich + ["thin"] * num_thin + ["chaotic"] * num_chaotic
    np.random.default_rng(spec.seed).shuffle(profiles)

    docs = []
    for i, profile in enumerate(profiles):
        rng = np.random.default_rng([spec.seed, i])
        category = spec.categories[i % len(spec.categories)]
        if profile == "rich":
            root = _build_rich(rng, spec)
        elif profile == "thin":
            root = _build_thin(rng)
        else:
            root = _build_chaotic(rng, spec)
        html = _render_html(root, rng)
        html_rel = f"html/doc_{i:05d}.html"
        (out / html_rel).write_text(html, encoding="utf-8")

        url = f"synth://{category}/{i:05d}"
        record = {
            "doc_id": i,
            "url": url,
            "category": category,
            "label": 1 if profile == "rich" else 0,
            "profile": profile,
            "html": html_rel,
            "num_nodes": 0,
            "parent_of": [],
            "tags": [],
            "words": [],
            "styles": [],
            "geometry": [],
        }
        for el, parent in _flatten(root):
            record["num_nodes"] += 1
            record["parent_of"].append(parent)
            record["tags"].append(el.tag)
            record["words"].append(el.words)
            record["styles"].append(el.style)
            record["geometry"].append(list(el.geom))
        if emit_prerendered:
            pre_rel = f"prerendered/doc_{i:05d}.jsonl"
            write_prerendered(_as_tree(root, url, category), out / pre_rel)
            record["prerendered"] = pre_rel
        docs.append(record)

    manifest = {
        "version": MANIFEST_VERSION,
        "spec": {**asdict(spec), "categories": list(spec.categories),
                 "sections": list(spec.sections),
                 "chaotic_boxes": list(spec.chaotic_boxes)},
        "num_docs": n,
        "docs": docs,
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ": "), indent=0)
        fh.write("\n")
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MANIFEST_VERSION:
        raise VersionError(f"unsupported manifest version {manifest.get('version')!r}")
    return manifest


def split(manifest: dict, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> dict[str, list[int]]:
    """Stratified train/val/test doc ids; every (category, label) cell is
    divided with the same proportions so no split loses a class."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise BadRatios(f"ratios must be three non-negatives summing to 1, got {ratios}")
    strata: dict[tuple[str, int], list[int]] = {}
    for doc in manifest["docs"]:
        strata.setdefault((doc["category"], doc["label"]), []).append(doc["doc_id"])
    rng = np.random.default_rng(seed)
    out: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for key in sorted(strata):
        ids = sorted(strata[key])
        rng.shuffle(ids)
        n = len(ids)
        n_train = int(ratios[0] * n)
        n_val = int(ratios[1] * n)
        out["train"].extend(ids[:n_train])
        out["val"].extend(ids[n_train:n_train + n_val])
        out["test"].extend(ids[n_train + n_val:])
    for ids in out.values():
        ids.sort()
    return out
