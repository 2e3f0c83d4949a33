"""HTML ingestion: tag-soup parsing, style resolution, and flow-layout geometry.

The parser accepts arbitrary UTF-8 text and always recovers a tree (or
raises :class:`EmptyDocument` when no element survives). Only a defined
subset is understood: elements, attributes, inline ``style`` declarations
and text; scripts, styles, comments and doctypes are skipped.

Geometry comes from one of two paths: :func:`estimate_geometry` runs a
deterministic block/inline flow heuristic, while :func:`load_prerendered`
imports boxes produced by a real renderer from the JSONL node-record
format (see :func:`write_prerendered`).
"""
from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field, replace
from html.parser import HTMLParser
from typing import Iterator

__all__ = [
    "NodeType", "Geometry", "DomNode", "DomTree", "EmptyDocument", "SchemaError",
    "parse_html", "estimate_geometry", "load_prerendered", "write_prerendered",
    "node_type_for_tag", "TAG_DEFAULT_STYLE",
]


class EmptyDocument(ValueError):
    """No element node could be recovered from the input."""


class SchemaError(ValueError):
    """A pre-rendered JSONL record is malformed; carries the 1-based line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NodeType(str, enum.Enum):
    TEXT = "text"
    IMAGE = "image"
    VIDEO = "video"
    CONTAINER = "container"
    INTERACTIVE = "interactive"
    OTHER = "other"
    VIRTUAL = "virtual"  # reserved for the layout graph's global node


# Fixed, versioned tag -> node-type table. Unknown tags map to OTHER.
_TYPE_TAGS: dict[NodeType, tuple[str, ...]] = {
    NodeType.TEXT: (
        "p", "span", "h1", "h2", "h3", "h4", "h5", "h6", "li", "td", "th",
        "dt", "dd", "blockquote", "pre", "code", "em", "strong", "b", "i",
        "u", "small", "sub", "sup", "label", "caption", "figcaption", "cite",
        "q", "abbr", "mark", "time", "title",
    ),
    NodeType.IMAGE: ("img", "picture", "svg"),
    NodeType.VIDEO: ("video", "audio"),
    NodeType.INTERACTIVE: (
        "a", "button", "input", "select", "textarea", "form", "option",
        "details", "summary",
    ),
    NodeType.CONTAINER: (
        "html", "body", "head", "div", "section", "article", "header",
        "footer", "main", "nav", "aside", "ul", "ol", "dl", "table", "thead",
        "tbody", "tfoot", "tr", "figure", "fieldset", "hr", "br",
    ),
}

TAG_TO_TYPE: dict[str, NodeType] = {
    tag: ntype for ntype, tags in _TYPE_TAGS.items() for tag in tags
}


def node_type_for_tag(tag_name: str) -> NodeType:
    return TAG_TO_TYPE.get(tag_name.lower(), NodeType.OTHER)


@dataclass(frozen=True)
class Geometry:
    height: float = 0.0
    width: float = 0.0
    xpos: float = 0.0
    ypos: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {"height": self.height, "width": self.width,
                "xpos": self.xpos, "ypos": self.ypos}


@dataclass
class DomNode:
    node_id: int
    tag_name: str
    node_type: NodeType
    style: dict[str, str] = field(default_factory=dict)
    geometry: Geometry = field(default_factory=Geometry)
    text_length: int = 0
    children: list[int] = field(default_factory=list)


@dataclass
class DomTree:
    nodes: list[DomNode]
    root_id: int
    source_url: str = ""
    category: str = ""

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> DomNode:
        return self.nodes[node_id]

    def parent_map(self) -> dict[int, int | None]:
        parents: dict[int, int | None] = {self.root_id: None}
        for node in self.nodes:
            for child in node.children:
                parents[child] = node.node_id
        return parents

    def walk(self) -> Iterator[DomNode]:
        """Pre-order DFS from the root."""
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            stack.extend(reversed(node.children))

    def depth(self) -> int:
        """Longest root-to-leaf path, in edges."""
        best = 0
        stack = [(self.root_id, 0)]
        while stack:
            nid, d = stack.pop()
            best = max(best, d)
            stack.extend((c, d + 1) for c in self.nodes[nid].children)
        return best

    def validate(self) -> None:
        ids = [n.node_id for n in self.nodes]
        if ids != list(range(len(self.nodes))):
            raise ValueError("node_ids must be contiguous from 0 in list order")
        parents = self.parent_map()
        if len(parents) != len(self.nodes):
            raise ValueError("tree must be connected from the root")
        for node in self.nodes:
            g = node.geometry
            for value in (g.height, g.width, g.xpos, g.ypos):
                if not math.isfinite(value) or value < 0:
                    raise ValueError(f"node {node.node_id}: bad geometry {g}")


# --- parsing ---------------------------------------------------------------

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})

_SKIP_TAGS = frozenset({"script", "style", "noscript", "template"})

# Tag-soup recovery: opening the key implicitly closes any of the values
# still open above it (nearest first).
_AUTOCLOSE: dict[str, frozenset[str]] = {
    "p": frozenset({"p"}),
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr", "td", "th"}),
    "td": frozenset({"td", "th"}),
    "th": frozenset({"td", "th"}),
    "option": frozenset({"option"}),
}


class _PendingNode:
    __slots__ = ("tag", "style", "words", "children")

    def __init__(self, tag: str, style: dict[str, str]):
        self.tag = tag
        self.style = style
        self.words = 0
        self.children: list[_PendingNode] = []


def parse_style_attr(value: str) -> dict[str, str]:
    """'color: red; width:10px' -> {'color': 'red', 'width': '10px'}."""
    out: dict[str, str] = {}
    for chunk in value.split(";"):
        if ":" not in chunk:
            continue
        prop, _, raw = chunk.partition(":")
        prop = prop.strip().lower()
        raw = raw.strip()
        if prop and raw:
            out[prop] = raw
    return out


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.roots: list[_PendingNode] = []
        self.stack: list[_PendingNode] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if self._skip_depth:
            if tag not in VOID_TAGS:
                self._skip_depth += 1
            return
        if tag in _SKIP_TAGS:
            self._skip_depth = 1
            return
        closes = _AUTOCLOSE.get(tag)
        if closes:
            while self.stack and self.stack[-1].tag in closes:
                self.stack.pop()
        style = {}
        for name, value in attrs:
            if name and name.lower() == "style" and value:
                style = parse_style_attr(value)
        node = _PendingNode(tag, style)
        if self.stack:
            self.stack[-1].children.append(node)
        else:
            self.roots.append(node)
        if tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        tag = tag.lower()
        if self._skip_depth or tag in _SKIP_TAGS:
            return
        self.handle_starttag(tag, attrs)
        if tag not in VOID_TAGS and self.stack and self.stack[-1].tag == tag:
            self.stack.pop()

    def handle_endtag(self, tag):
        tag = tag.lower()
        if self._skip_depth:
            self._skip_depth -= 1
            return
        if tag in _SKIP_TAGS or tag in VOID_TAGS:
            return
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # Stray end tag: ignore.

    def handle_data(self, data):
        if self._skip_depth or not self.stack:
            return
        words = len(data.split())
        if words:
            self.stack[-1].words += words


def parse_html(source: str, url: str = "", category: str = "") -> DomTree:
    """Parse HTML text into a :class:`DomTree`; never raises on bad markup.

    Multiple top-level elements are wrapped in a synthetic ``html`` root.
    Raises :class:`EmptyDocument` when the input contains no element at all.
    """
    builder = _TreeBuilder()
    builder.feed(source)
    builder.close()
    roots = builder.roots
    if not roots:
        raise EmptyDocument("no element node found")
    if len(roots) == 1:
        root = roots[0]
    else:
        root = _PendingNode("html", {})
        root.children = roots

    nodes: list[DomNode] = []

    def emit(pending: _PendingNode) -> int:
        nid = len(nodes)
        nodes.append(DomNode(
            node_id=nid,
            tag_name=pending.tag,
            node_type=node_type_for_tag(pending.tag),
            style=pending.style,
            text_length=pending.words,
        ))
        nodes[nid].children = [emit(child) for child in pending.children]
        return nid

    emit(root)
    tree = DomTree(nodes=nodes, root_id=0, source_url=url, category=category)
    return tree


# --- geometry heuristic ----------------------------------------------------

# Deterministic text model: every word occupies WORD_PX horizontally and
# lines are LINE_PX tall.
WORD_PX = 60.0
LINE_PX = 16.0

INLINE_TAGS = frozenset({
    "span", "a", "b", "i", "em", "strong", "u", "small", "sub", "sup",
    "code", "label", "img", "button", "input", "select", "abbr", "cite",
    "q", "mark", "time", "br",
})

# Intrinsic (width, height) for replaced/widget elements.
DEFAULT_SIZES: dict[str, tuple[float, float]] = {
    "img": (150.0, 100.0),
    "picture": (150.0, 100.0),
    "svg": (150.0, 100.0),
    "video": (320.0, 240.0),
    "audio": (300.0, 32.0),
    "input": (160.0, 24.0),
    "button": (80.0, 24.0),
    "select": (160.0, 24.0),
    "textarea": (300.0, 60.0),
    "hr": (0.0, 2.0),  # width 0 -> fill parent
}

# Per-tag default sheet for style resolution. Only typography and box-model
# basics are defaulted; properties not listed stay absent so downstream
# featurization can distinguish "missing" from any concrete value.
_BASE_STYLE = {
    "font-size": "16px",
    "font-weight": "normal",
    "font-style": "normal",
    "position": "static",
    "visibility": "visible",
}
_TAG_STYLE_OVERRIDES: dict[str, dict[str, str]] = {
    "h1": {"font-size": "32px", "font-weight": "bold"},
    "h2": {"font-size": "24px", "font-weight": "bold"},
    "h3": {"font-size": "19px", "font-weight": "bold"},
    "h4": {"font-size": "16px", "font-weight": "bold"},
    "h5": {"font-size": "13px", "font-weight": "bold"},
    "h6": {"font-size": "11px", "font-weight": "bold"},
    "b": {"font-weight": "bold"},
    "strong": {"font-weight": "bold"},
    "th": {"font-weight": "bold"},
    "i": {"font-style": "italic"},
    "em": {"font-style": "italic"},
    "cite": {"font-style": "italic"},
}


def TAG_DEFAULT_STYLE(tag_name: str) -> dict[str, str]:
    """Resolved default declarations for a tag, display included."""
    tag = tag_name.lower()
    style = dict(_BASE_STYLE)
    style["display"] = "inline" if tag in INLINE_TAGS else "block"
    style.update(_TAG_STYLE_OVERRIDES.get(tag, {}))
    return style


_LEN_RE = re.compile(r"^(-?\d+(?:\.\d+)?)\s*(px|%)?$")


def parse_length(raw: str | None, reference: float) -> float | None:
    """Parse '120px', '50%', or a bare number; None when unparsable."""
    if raw is None:
        return None
    m = _LEN_RE.match(raw.strip())
    if not m:
        return None
    value = float(m.group(1))
    if m.group(2) == "%":
        value = value * reference / 100.0
    return value


def _display_of(node: DomNode) -> str:
    raw = node.style.get("display")
    if raw in ("block", "inline", "none"):
        return raw
    return "inline" if node.tag_name in INLINE_TAGS else "block"


def _is_absolute(node: DomNode) -> bool:
    return node.style.get("position", "").strip().lower() == "absolute"


def _intrinsic_inline_width(node: DomNode, avail: float) -> float:
    if node.tag_name in DEFAULT_SIZES:
        return min(DEFAULT_SIZES[node.tag_name][0], avail)
    return min(node.text_length * WORD_PX, avail)


def _text_height(words: int, width: float) -> float:
    if words == 0:
        return 0.0
    per_line = max(1, int(max(width, 1.0) // WORD_PX))
    return math.ceil(words / per_line) * LINE_PX


def estimate_geometry(tree: DomTree, viewport: tuple[float, float] = (1280.0, 2000.0)) -> DomTree:
    """Return a copy of `tree` with geometry from the flow heuristic.

    Blocks stack vertically and span their parent's width; inline elements
    pack left-to-right into rows. Explicit width/height declarations
    override the defaults, but a box still grows to contain its in-flow
    children (so child boxes always nest inside their parent). Absolutely
    positioned nodes are placed at their left/top page offsets and take no
    flow space.
    """
    if viewport[0] <= 0:
        raise ValueError("viewport width must be positive")
    geoms: dict[int, Geometry] = {}
    vw = float(viewport[0])

    def layout(nid: int, x: float, y: float, avail_w: float) -> tuple[float, float]:
        """Place node nid at (x, y); returns its (width, height) in flow."""
        node = tree.nodes[nid]
        display = _display_of(node)
        if display == "none":
            geoms[nid] = Geometry(0.0, 0.0, x, y)
            for child in node.children:
                layout(child, x, y, avail_w)  # zero-size but still placed
                geoms[child] = Geometry(0.0, 0.0, x, y)
            return 0.0, 0.0

        if _is_absolute(node):
            ax = max(0.0, parse_length(node.style.get("left"), vw) or 0.0)
            ay = max(0.0, parse_length(node.style.get("top"), vw) or 0.0)
            w, h = _box(nid, ax, ay, vw)
            return 0.0, 0.0  # takes no flow space

        return _box(nid, x, y, avail_w)

    def _box(nid: int, x: float, y: float, avail_w: float) -> tuple[float, float]:
        node = tree.nodes[nid]
        display = _display_of(node)
        styled_w = parse_length(node.style.get("width"), avail_w)
        if styled_w is not None:
            width = min(max(styled_w, 0.0), avail_w)
        elif display == "block":
            width = avail_w
        else:
            width = _intrinsic_inline_width(node, avail_w)
        width = max(width, 0.0)

        inner_w = max(width, 1.0)
        cursor = y + _text_height(node.text_length, inner_w)
        row_x = 0.0
        row_h = 0.0

        def flush_row():
            nonlocal cursor, row_x, row_h
            cursor += row_h
            row_x = 0.0
            row_h = 0.0

        for child_id in node.children:
            child = tree.nodes[child_id]
            child_display = _display_of(child)
            if _is_absolute(child) or child_display == "none":
                layout(child_id, x, cursor, inner_w)
                continue
            if child_display == "block":
                if row_h:
                    flush_row()
                _, ch = layout(child_id, x, cursor, inner_w)
                cursor += ch
            else:
                cw_est = parse_length(child.style.get("width"), inner_w)
                if cw_est is None:
                    cw_est = _intrinsic_inline_width(child, inner_w)
                if row_x > 0 and row_x + cw_est > inner_w:
                    flush_row()
                cw, ch = layout(child_id, x + row_x, cursor, inner_w - row_x)
                row_x += cw
                row_h = max(row_h, ch)
        if row_h:
            flush_row()

        content_h = cursor - y
        styled_h = parse_length(node.style.get("height"), 0.0)
        if styled_h is not None:
            height = max(styled_h, content_h, 0.0)
        elif content_h > 0:
            height = content_h
        elif node.tag_name in DEFAULT_SIZES:
            height = DEFAULT_SIZES[node.tag_name][1]
        elif display == "inline" and (node.text_length or not node.children):
            height = LINE_PX if node.text_length else 0.0
        else:
            height = 0.0

        geoms[nid] = Geometry(height=height, width=width, xpos=x, ypos=y)
        return width, height

    layout(tree.root_id, 0.0, 0.0, vw)
    new_nodes = [replace(n, geometry=geoms.get(n.node_id, Geometry()),
                         style=dict(n.style), children=list(n.children))
                 for n in tree.nodes]
    return DomTree(nodes=new_nodes, root_id=tree.root_id,
                   source_url=tree.source_url, category=tree.category)


# --- pre-rendered JSONL ----------------------------------------------------

_NODE_FIELDS = ("node_id", "parent_id", "tag_name", "style", "geometry", "text_length")
_GEOM_FIELDS = ("height", "width", "xpos", "ypos")


def write_prerendered(tree: DomTree, path) -> None:
    """Serialize `tree` in the node-record JSONL interchange format."""
    parents = tree.parent_map()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"url": tree.source_url, "category": tree.category}) + "\n")
        for node in tree.nodes:
            record = {
                "node_id": node.node_id,
                "parent_id": parents.get(node.node_id),
                "tag_name": node.tag_name,
                "style": node.style,
                "geometry": node.geometry.as_dict(),
                "text_length": node.text_length,
            }
            fh.write(json.dumps(record) + "\n")


def load_prerendered(path) -> DomTree:
    """Load a tree whose geometry was produced elsewhere (no heuristics run)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"bad JSON: {exc}", line=1) from exc
    for key in ("url", "category"):
        if key not in header:
            raise SchemaError(f"header missing {key!r}", line=1)

    records: list[dict] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"bad JSON: {exc}", line=lineno) from exc
        for fieldname in _NODE_FIELDS:
            if fieldname not in rec:
                raise SchemaError(f"missing {fieldname!r}", line=lineno)
        for g in _GEOM_FIELDS:
            if g not in rec["geometry"]:
                raise SchemaError(f"geometry missing {g!r}", line=lineno)
        rec["_line"] = lineno
        records.append(rec)
    if not records:
        raise SchemaError("no node records", line=1)

    n = len(records)
    nodes: list[DomNode | None] = [None] * n
    root_id: int | None = None
    for rec in records:
        nid = rec["node_id"]
        if not isinstance(nid, int) or not 0 <= nid < n or nodes[nid] is not None:
            raise SchemaError(f"node_id {nid!r} not a unique id in [0, {n})", line=rec["_line"])
        g = rec["geometry"]
        nodes[nid] = DomNode(
            node_id=nid,
            tag_name=str(rec["tag_name"]),
            node_type=node_type_for_tag(str(rec["tag_name"])),
            style={str(k): str(v) for k, v in rec["style"].items()},
            geometry=Geometry(height=float(g["height"]), width=float(g["width"]),
                              xpos=float(g["xpos"]), ypos=float(g["ypos"])),
            text_length=int(rec["text_length"]),
        )
        if rec["parent_id"] is None:
            if root_id is not None:
                raise SchemaError("multiple root nodes", line=rec["_line"])
            root_id = nid
    if root_id is None:
        raise SchemaError("no root node (parent_id null) found", line=2)
    for rec in records:
        pid = rec["parent_id"]
        if pid is None:
            continue
        if not isinstance(pid, int) or not 0 <= pid < n:
            raise SchemaError(f"parent_id {pid!r} out of range", line=rec["_line"])
        nodes[pid].children.append(rec["node_id"])

    tree = DomTree(nodes=nodes, root_id=root_id,
                   source_url=str(header["url"]), category=str(header["category"]))
    tree.validate()
    return tree
