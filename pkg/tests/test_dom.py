"""Parser, geometry-heuristic, and JSONL round-trip tests."""
import json

import pytest
from hypothesis import given, settings, strategies as st

from layoutrank import dom


class TestParseHtml:
    def test_five_node_document(self):
        tree = dom.parse_html("<html><body><div><p>hi world</p><img/></div></body></html>")
        assert len(tree) == 5
        assert tree.nodes[tree.root_id].tag_name == "html"
        p = next(n for n in tree.nodes if n.tag_name == "p")
        assert p.text_length == 2
        img = next(n for n in tree.nodes if n.tag_name == "img")
        assert img.node_type is dom.NodeType.IMAGE

    def test_unclosed_div(self):
        tree = dom.parse_html("<div>")
        assert len(tree) == 1
        assert tree.nodes[0].tag_name == "div"

    def test_empty_document_raises(self):
        with pytest.raises(dom.EmptyDocument):
            dom.parse_html("just some text, no tags")

    def test_script_and_comments_skipped(self):
        tree = dom.parse_html(
            "<div><!-- note --><script>var x = '<p>fake</p>';</script><p>ok</p></div>")
        tags = sorted(n.tag_name for n in tree.nodes)
        assert tags == ["div", "p"]

    def test_inline_style_parsed(self):
        tree = dom.parse_html('<div style="width: 100px; color:red">x</div>')
        assert tree.nodes[0].style == {"width": "100px", "color": "red"}

    def test_multiple_roots_wrapped(self):
        tree = dom.parse_html("<div>a</div><p>b c</p>")
        root = tree.nodes[tree.root_id]
        assert root.tag_name == "html"
        assert len(root.children) == 2

    def test_mismatched_end_tags_recovered(self):
        tree = dom.parse_html("<div><span>text</div></span><p>more")
        assert {n.tag_name for n in tree.nodes} >= {"div", "span", "p"}
        tree.validate()

    def test_autoclose_paragraphs_and_list_items(self):
        tree = dom.parse_html("<ul><li>one<li>two<li>three</ul>")
        ul = next(n for n in tree.nodes if n.tag_name == "ul")
        assert len(ul.children) == 3

    def test_node_ids_preorder_contiguous(self):
        tree = dom.parse_html("<div><p>a</p><span><b>c</b></span></div>")
        tree.validate()
        assert [n.node_id for n in tree.nodes] == list(range(len(tree)))
        assert [n.tag_name for n in tree.walk()] == ["div", "p", "span", "b"]

    def test_determinism(self):
        src = '<div style="width:10px"><p>a b</p><img></div>'
        t1, t2 = dom.parse_html(src), dom.parse_html(src)
        assert [(n.tag_name, n.text_length, n.style, n.children) for n in t1.nodes] == \
               [(n.tag_name, n.text_length, n.style, n.children) for n in t2.nodes]

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=400))
    def test_parse_is_total(self, source):
        try:
            tree = dom.parse_html(source)
        except dom.EmptyDocument:
            return
        tree.validate()


class TestEstimateGeometry:
    def test_single_div_full_width(self):
        tree = dom.estimate_geometry(dom.parse_html("<div></div>"), viewport=(1000, 800))
        g = tree.nodes[0].geometry
        assert (g.width, g.xpos, g.ypos) == (1000.0, 0.0, 0.0)

    def test_sibling_blocks_stack(self):
        src = ('<body><div style="height:100px"></div>'
               '<div style="height:200px"></div></body>')
        tree = dom.estimate_geometry(dom.parse_html(src), viewport=(1000, 800))
        first, second = tree.nodes[1], tree.nodes[2]
        assert first.geometry.height == 100.0
        assert second.geometry.ypos == 100.0
        assert tree.nodes[0].geometry.height == 300.0

    def test_explicit_width_override(self):
        tree = dom.estimate_geometry(
            dom.parse_html('<div style="width: 300px; height: 50px"></div>'),
            viewport=(1000, 800))
        g = tree.nodes[0].geometry
        assert (g.width, g.height) == (300.0, 50.0)

    def test_inline_elements_share_row(self):
        src = ('<div><span style="width:100px">a</span>'
               '<span style="width:100px">b</span></div>')
        tree = dom.estimate_geometry(dom.parse_html(src), viewport=(1000, 800))
        s1, s2 = tree.nodes[1], tree.nodes[2]
        assert s1.geometry.ypos == s2.geometry.ypos
        assert s2.geometry.xpos == pytest.approx(100.0)

    def test_inline_wrap(self):
        src = ('<div style="width:150px"><span style="width:100px">a</span>'
               '<span style="width:100px">b</span></div>')
        tree = dom.estimate_geometry(dom.parse_html(src), viewport=(1000, 800))
        assert tree.nodes[2].geometry.ypos > tree.nodes[1].geometry.ypos

    def test_absolute_positioning_out_of_flow(self):
        src = ('<body><div style="position:absolute; left:40px; top:30px; '
               'width:50px; height:50px"></div>'
               '<div style="height:20px"></div></body>')
        tree = dom.estimate_geometry(dom.parse_html(src), viewport=(1000, 800))
        abs_div, flow_div = tree.nodes[1], tree.nodes[2]
        assert (abs_div.geometry.xpos, abs_div.geometry.ypos) == (40.0, 30.0)
        assert flow_div.geometry.ypos == 0.0  # absolute sibling takes no flow space
        assert tree.nodes[0].geometry.height == 20.0

    def test_text_contributes_height(self):
        tree = dom.estimate_geometry(dom.parse_html("<p>one two three</p>"),
                                     viewport=(1000, 800))
        assert tree.nodes[0].geometry.height == dom.LINE_PX

    def test_children_nest_inside_parent(self):
        src = ('<div><div style="height:30px"><p>deep words here</p></div>'
               '<span>tail</span><img></div>')
        tree = dom.estimate_geometry(dom.parse_html(src), viewport=(600, 800))
        parents = tree.parent_map()
        for node in tree.nodes:
            pid = parents[node.node_id]
            if pid is None or node.style.get("position") == "absolute":
                continue
            pg = tree.nodes[pid].geometry
            g = node.geometry
            assert g.xpos >= pg.xpos - 1e-9
            assert g.ypos >= pg.ypos - 1e-9
            assert g.xpos + g.width <= pg.xpos + pg.width + 1e-9
            assert g.ypos + g.height <= pg.ypos + pg.height + 1e-9

    def test_geometry_finite_nonnegative(self):
        src = ('<div style="width:-50px"><p style="height:1e4px">x</p>'
               '<b style="left:-1px;position:absolute">y</b></div>')
        tree = dom.estimate_geometry(dom.parse_html(src), viewport=(500, 500))
        tree.validate()


class TestPrerenderedRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        tree = dom.estimate_geometry(
            dom.parse_html('<div style="width:80px"><p>a b c</p><img></div>',
                           url="http://x.test/1", category="news"))
        path = tmp_path / "tree.jsonl"
        dom.write_prerendered(tree, path)
        loaded = dom.load_prerendered(path)
        assert loaded.source_url == tree.source_url
        assert loaded.category == tree.category
        assert len(loaded) == len(tree)
        for a, b in zip(tree.nodes, loaded.nodes):
            assert (a.tag_name, a.style, a.text_length, a.children) == \
                   (b.tag_name, b.style, b.text_length, b.children)
            assert a.geometry == b.geometry

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rows = [
            {"url": "u", "category": "c"},
            {"node_id": 0, "parent_id": None, "tag_name": "div", "style": {},
             "geometry": {"height": 1, "width": 1, "xpos": 0, "ypos": 0},
             "text_length": 0},
            {"node_id": 1, "parent_id": 0, "style": {},
             "geometry": {"height": 1, "width": 1, "xpos": 0, "ypos": 0},
             "text_length": 0},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        with pytest.raises(dom.SchemaError) as exc:
            dom.load_prerendered(path)
        assert exc.value.line == 3

    def test_missing_header_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"url": "u"}\n')
        with pytest.raises(dom.SchemaError) as exc:
            dom.load_prerendered(path)
        assert exc.value.line == 1

    def test_no_root_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rows = [
            {"url": "u", "category": "c"},
            {"node_id": 0, "parent_id": 0, "tag_name": "div", "style": {},
             "geometry": {"height": 1, "width": 1, "xpos": 0, "ypos": 0},
             "text_length": 0},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        with pytest.raises(dom.SchemaError):
            dom.load_prerendered(path)


def test_node_type_mapping_fixed():
    assert dom.node_type_for_tag("p") is dom.NodeType.TEXT
    assert dom.node_type_for_tag("IMG") is dom.NodeType.IMAGE
    assert dom.node_type_for_tag("video") is dom.NodeType.VIDEO
    assert dom.node_type_for_tag("div") is dom.NodeType.CONTAINER
    assert dom.node_type_for_tag("button") is dom.NodeType.INTERACTIVE
    assert dom.node_type_for_tag("blink") is dom.NodeType.OTHER
