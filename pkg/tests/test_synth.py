"""Generated pages replayed through the parser must match their manifest."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from layoutrank.dom import estimate_geometry, load_prerendered, parse_html
from layoutrank.graph import build_layout_graph
from layoutrank.synth import (
    BadRatios,
    BadSpec,
    TemplateSpec,
    generate,
    read_manifest,
    split,
)


def small_spec(**kwargs):
    defaults = dict(categories=("news", "video", "shopping"), rich_fraction=0.3, seed=11)
    defaults.update(kwargs)
    return TemplateSpec(**defaults)


def replay(out_dir: Path, doc: dict):
    html = (out_dir / doc["html"]).read_text(encoding="utf-8")
    return estimate_geometry(parse_html(html, url=doc["url"], category=doc["category"]))


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = generate(small_spec(), 60, out, emit_prerendered=True)
    return out, manifest


class TestManifestAsOracle:
    def test_structure_matches_parse(self, corpus):
        out, manifest = corpus
        for doc in manifest["docs"]:
            tree = replay(out, doc)
            assert len(tree) == doc["num_nodes"]
            assert [n.tag_name for n in tree.walk()] == doc["tags"]
            assert [n.text_length for n in tree.walk()] == doc["words"]
            parents = tree.parent_map()
            assert [parents.get(i) for i in range(len(tree))] == doc["parent_of"]

    def test_geometry_matches_layout_estimate(self, corpus):
        out, manifest = corpus
        for doc in manifest["docs"]:
            tree = replay(out, doc)
            got = [[n.geometry.height, n.geometry.width, n.geometry.xpos, n.geometry.ypos]
                   for n in tree.nodes]
            np.testing.assert_allclose(got, doc["geometry"], atol=1e-9,
                                       err_msg=f"{doc['url']} ({doc['profile']})")

    def test_inline_styles_recorded(self, corpus):
        out, manifest = corpus
        for doc in manifest["docs"]:
            tree = replay(out, doc)
            assert [n.style for n in tree.nodes] == doc["styles"]

    def test_prerendered_agrees_with_replay(self, corpus):
        out, manifest = corpus
        for doc in manifest["docs"][:20]:
            direct = load_prerendered(out / doc["prerendered"])
            replayed = replay(out, doc)
            assert [n.tag_name for n in direct.nodes] == [n.tag_name for n in replayed.nodes]
            for a, b in zip(direct.nodes, replayed.nodes):
                np.testing.assert_allclose(
                    [a.geometry.height, a.geometry.width, a.geometry.xpos, a.geometry.ypos],
                    [b.geometry.height, b.geometry.width, b.geometry.xpos, b.geometry.ypos],
                    atol=1e-9)

    def test_read_manifest_round_trip(self, corpus):
        out, manifest = corpus
        assert read_manifest(out) == manifest
        assert read_manifest(out / "manifest.json") == manifest


class TestLabels:
    def test_profile_counts_are_exact(self, tmp_path):
        manifest = generate(small_spec(rich_fraction=0.3), 100, tmp_path)
        profiles = [d["profile"] for d in manifest["docs"]]
        assert profiles.count("rich") == 30
        assert profiles.count("thin") == 35
        assert profiles.count("chaotic") == 35
        for doc in manifest["docs"]:
            assert doc["label"] == (1 if doc["profile"] == "rich" else 0)

    def test_categories_cycle_evenly(self, tmp_path):
        manifest = generate(small_spec(), 90, tmp_path)
        cats = [d["category"] for d in manifest["docs"]]
        assert {cats.count(c) for c in ("news", "video", "shopping")} == {30}

    def test_thin_pages_stay_under_thirty_words(self, tmp_path):
        manifest = generate(small_spec(), 60, tmp_path)
        for doc in manifest["docs"]:
            if doc["profile"] == "thin":
                assert sum(doc["words"]) < 30

    def test_layout_features_separate_labels(self, tmp_path):
        """A two-rule reading of the layout graph should recover >=95% of labels."""
        out = tmp_path / "c"
        manifest = generate(small_spec(seed=5), 200, out)
        hits = 0
        for doc in manifest["docs"]:
            g = build_layout_graph(replay(out, doc))
            absolute = sum(1 for raw in g.raw_features[1:]
                           if raw.get("position_type") == "absolute")
            words = sum(raw.get("num_words", 0) for raw in g.raw_features[1:])
            predicted = 0 if (absolute >= 3 or words < 30) else 1
            hits += predicted == doc["label"]
        assert hits / len(manifest["docs"]) >= 0.95


class TestDeterminism:
    def test_regeneration_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate(small_spec(), 40, a, emit_prerendered=True)
        generate(small_spec(), 40, b, emit_prerendered=True)
        rel_files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert rel_files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        for rel in rel_files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_different_seed_changes_content(self, tmp_path):
        a = generate(small_spec(seed=1), 20, tmp_path / "a")
        b = generate(small_spec(seed=2), 20, tmp_path / "b")
        assert a != b


class TestSplit:
    def make_manifest(self, tmp_path, n=200):
        return generate(small_spec(), n, tmp_path)

    def test_partition_is_disjoint_and_complete(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        parts = split(manifest, (0.8, 0.1, 0.1), seed=3)
        all_ids = parts["train"] + parts["val"] + parts["test"]
        assert sorted(all_ids) == list(range(200))
        assert len(set(all_ids)) == 200

    def test_stratified_by_category_and_label(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        parts = split(manifest, (0.5, 0.25, 0.25), seed=3)
        by_id = {d["doc_id"]: d for d in manifest["docs"]}
        for key in [("news", 0), ("news", 1), ("video", 0)]:
            stratum = [d["doc_id"] for d in manifest["docs"]
                       if (d["category"], d["label"]) == key]
            in_train = sum(1 for i in parts["train"]
                           if (by_id[i]["category"], by_id[i]["label"]) == key)
            assert in_train == int(0.5 * len(stratum))

    def test_deterministic_for_seed(self, tmp_path):
        manifest = self.make_manifest(tmp_path, n=60)
        assert split(manifest, seed=9) == split(manifest, seed=9)
        assert split(manifest, seed=9) != split(manifest, seed=10)

    def test_bad_ratios_rejected(self, tmp_path):
        manifest = self.make_manifest(tmp_path, n=10)
        for ratios in [(0.5, 0.5, 0.5), (0.8, 0.3, -0.1), (1.0, 0.0)]:
            with pytest.raises(BadRatios):
                split(manifest, ratios)


class TestSpecValidation:
    def test_bad_values_rejected(self):
        with pytest.raises(BadSpec):
            TemplateSpec(categories=())
        with pytest.raises(BadSpec):
            TemplateSpec(rich_fraction=1.5)
        with pytest.raises(BadSpec):
            TemplateSpec(sections=(0, 3))
        with pytest.raises(BadSpec):
            TemplateSpec(chaotic_boxes=(5, 2))

    def test_zero_documents_rejected(self, tmp_path):
        with pytest.raises(BadSpec):
            generate(small_spec(), 0, tmp_path)

    def test_manifest_version_checked(self, tmp_path):
        generate(small_spec(), 3, tmp_path)
        path = tmp_path / "manifest.json"
        data = json.loads(path.read_text())
        data["version"] = 99
        path.write_text(json.dumps(data))
        with pytest.raises(ValueError):
            read_manifest(tmp_path)
