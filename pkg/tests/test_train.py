"""Balanced resampling and the training loop."""
from __future__ import annotations

import logging

import numpy as np
import pytest

import layoutrank.tensor as T
from layoutrank.dom import estimate_geometry, parse_html
from layoutrank.features import encode_graph, fit_buckets
from layoutrank.graph import build_layout_graph
from layoutrank.model import ModelConfig
from layoutrank.synth import TemplateSpec, generate
from layoutrank.train import (
    Diverged,
    LabeledExample,
    LengthMismatch,
    TrainConfig,
    mse_loss,
    run_ablation,
    train,
    upsample,
)


def make_dataset(tmp_path, n=24, dim=4, seed=3):
    spec = TemplateSpec(categories=("news", "video"), rich_fraction=0.5, seed=seed)
    manifest = generate(spec, n, tmp_path)
    graphs = []
    for doc in manifest["docs"]:
        html = (tmp_path / doc["html"]).read_text(encoding="utf-8")
        tree = estimate_geometry(parse_html(html, url=doc["url"], category=doc["category"]))
        graphs.append(build_layout_graph(tree))
    schema = fit_buckets(graphs, min_count=1, target_buckets=4, embedding_dim=dim)
    examples = [LabeledExample(graph=encode_graph(g, schema), label=float(doc["label"]),
                               category=doc["category"])
                for g, doc in zip(graphs, manifest["docs"])]
    return schema, examples


def dummy_example(category: str, label: float, tag="p"):
    tree = estimate_geometry(parse_html(f"<{tag}>x</{tag}>", category=category))
    g = build_layout_graph(tree)
    schema = fit_buckets([g], min_count=1, embedding_dim=4)
    return LabeledExample(graph=encode_graph(g, schema), label=label, category=category)


class TestUpsample:
    def test_equalizes_labels_within_each_category(self):
        examples = ([dummy_example("news", 1.0)] * 3 + [dummy_example("news", 0.0)] * 10
                    + [dummy_example("video", 1.0)] * 7 + [dummy_example("video", 0.0)] * 2)
        out = upsample(examples, seed=0)
        for category in ("news", "video"):
            ones = sum(1 for ex in out if ex.category == category and ex.label == 1.0)
            zeros = sum(1 for ex in out if ex.category == category and ex.label == 0.0)
            assert ones == zeros == 10 if category == "news" else ones == zeros == 7

    def test_no_original_example_is_lost(self):
        rng = np.random.default_rng(41)
        for trial in range(20):
            examples = []
            for category in ("a", "b", "c"):
                for label in (0.0, 1.0):
                    for _ in range(int(rng.integers(1, 12))):
                        examples.append(dummy_example(category, label))
            out = upsample(examples, seed=trial)
            assert set(map(id, examples)) <= set(map(id, out))
            # balance recount
            for category in ("a", "b", "c"):
                counts = {label: sum(1 for ex in out
                                     if ex.category == category and ex.label == label)
                          for label in (0.0, 1.0)}
                assert counts[0.0] == counts[1.0]

    def test_single_label_category_passes_through(self, caplog):
        examples = [dummy_example("solo", 1.0)] * 4
        with caplog.at_level(logging.WARNING, logger="layoutrank.train"):
            out = upsample(examples, seed=0)
        assert len(out) == 4
        assert any("single label" in r.message for r in caplog.records)

    def test_deterministic_by_seed(self):
        examples = [dummy_example("news", 1.0)] * 2 + [dummy_example("news", 0.0)] * 5
        a = upsample(examples, seed=7)
        b = upsample(examples, seed=7)
        assert list(map(id, a)) == list(map(id, b))


class TestMseLoss:
    def test_hand_value(self):
        preds = T.Tensor(np.array([[0.5], [0.5]]))
        assert mse_loss(None, preds, np.array([0.0, 1.0])).item() == 0.25

    def test_gradient_is_two_diff_over_n(self):
        preds = T.Tensor(np.array([[0.2], [0.9], [0.4]]), requires_grad=True)
        labels = np.array([0.0, 1.0, 1.0])
        tape = T.Tape()
        loss = mse_loss(tape, preds, labels)
        T.backward(tape, loss)
        np.testing.assert_allclose(preds.grad,
                                   2.0 * (preds.data - labels[:, None]) / 3.0, atol=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(LengthMismatch):
            mse_loss(None, T.Tensor(np.zeros((2, 1))), np.zeros(3))


def tiny_config(**kwargs):
    model = kwargs.pop("model", None) or ModelConfig(hidden_dim=4, num_layers=1, dropout=0.0)
    defaults = dict(learning_rate=0.05, batch_size=8, epochs=5, seed=0, model=model)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


class TestTrain:
    def test_single_example_converges(self, tmp_path):
        schema, examples = make_dataset(tmp_path, n=4)
        target = next(ex for ex in examples if ex.label == 1.0)
        config = tiny_config(batch_size=1, epochs=80, upsample=False)
        params, history = train([target], [], config, schema)
        assert history[-1]["train_loss"] < 0.01

    def test_run_is_reproducible(self, tmp_path):
        schema, examples = make_dataset(tmp_path)
        config = tiny_config(epochs=3)
        params_a, hist_a = train(examples[:16], examples[16:], config, schema)
        params_b, hist_b = train(examples[:16], examples[16:], config, schema)
        assert hist_a == hist_b
        for a, b in zip(params_a.all(), params_b.all()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_returns_best_validation_snapshot(self, tmp_path):
        schema, examples = make_dataset(tmp_path, n=32)
        config = tiny_config(epochs=6, learning_rate=0.02)
        params, history = train(examples[:24], examples[24:], config, schema)
        from layoutrank.train import _val_metrics
        final = _val_metrics(params, examples[24:])
        best_seen = max(h["auc"] for h in history if h.get("auc") is not None)
        assert final["auc"] == pytest.approx(best_seen, abs=1e-12)

    def test_history_carries_metrics(self, tmp_path):
        schema, examples = make_dataset(tmp_path, n=16)
        params, history = train(examples[:12], examples[12:], tiny_config(epochs=2), schema)
        assert len(history) == 2
        for entry in history:
            assert {"epoch", "train_loss", "auc", "pnr", "f1"} <= set(entry)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_reported(self, tmp_path):
        schema, examples = make_dataset(tmp_path, n=8)
        config = tiny_config(
            learning_rate=1e30, epochs=10,
            model=ModelConfig(arch="gin", hidden_dim=4, num_layers=5,
                              dropout=0.0, head="linear"))
        with pytest.raises(Diverged):
            train(examples, [], config, schema)

    def test_empty_training_set_rejected(self, tmp_path):
        schema, examples = make_dataset(tmp_path, n=4)
        with pytest.raises(ValueError):
            train([], examples, tiny_config(), schema)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)


class TestAblation:
    def test_grid_covers_variants_and_depths(self, tmp_path):
        schema, examples = make_dataset(tmp_path, n=16)
        base = tiny_config(epochs=1)
        rows = run_ablation(examples[:12], examples[12:], base, schema,
                            seeds=(0, 1), k_values=(1, 2))
        names = [row["variant"] for row in rows]
        assert len(rows) == 8 + 2
        assert "gat/virtual/cat" in names and "gin/mean_pool/nocat" in names
        assert "depth/K=2" in names
        for row in rows:
            for key in ("auc", "pnr", "f1"):
                stats = row["metrics"][key]
                assert len(stats["values"]) == 2
                assert {"mean", "std"} <= set(stats)
