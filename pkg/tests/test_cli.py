"""End-to-end checks for the command-line pipeline."""
import json
from pathlib import Path

import pytest

from layoutrank.cli import _train_config, build_parser, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Run the full pipeline once: corpus -> graphs -> schema -> model -> scores."""
    root = tmp_path_factory.mktemp("pipeline")
    corpus = root / "corpus"
    assert main(["synth", "--out", str(corpus), "--num", "24",
                 "--categories", "news,forum", "--seed", "7"]) == 0
    graphs = root / "graphs.jsonl"
    assert main(["ingest", "--manifest", str(corpus), "--out", str(graphs)]) == 0
    schema = root / "schema.json"
    assert main(["fit-buckets", "--graphs", str(graphs), "--out", str(schema),
                 "--min-count", "5", "--target-buckets", "6", "--dim", "8"]) == 0
    model = root / "model.json"
    assert main(["train", "--manifest", str(corpus), "--schema", str(schema),
                 "--out", str(model), "--epochs", "2", "--dim", "8", "--layers", "1",
                 "--batch-size", "8", "--ratios", "0.6,0.2,0.2"]) == 0
    scores = root / "scores.tsv"
    assert main(["score", "--model", str(model), "--schema", str(schema),
                 "--graphs", str(graphs), "--out", str(scores)]) == 0
    return {"root": root, "corpus": corpus, "graphs": graphs,
            "schema": schema, "model": model, "scores": scores}


class TestPipeline:
    def test_artifacts_exist(self, workspace):
        for key in ("graphs", "schema", "model", "scores"):
            assert workspace[key].exists(), key
        lines = workspace["scores"].read_text().splitlines()
        assert lines[0].startswith("# layout-scores v1 schema=")
        assert len(lines) == 1 + 24

    def test_scoring_is_deterministic(self, workspace, tmp_path):
        again = tmp_path / "again.tsv"
        assert main(["score", "--model", str(workspace["model"]),
                     "--schema", str(workspace["schema"]),
                     "--graphs", str(workspace["graphs"]),
                     "--out", str(again)]) == 0
        assert again.read_bytes() == workspace["scores"].read_bytes()

    def test_evaluate_writes_metrics(self, workspace, tmp_path, capsys):
        out = tmp_path / "eval.json"
        code = main(["evaluate", "--scores", str(workspace["scores"]),
                     "--manifest", str(workspace["corpus"]),
                     "--split", "all", "--out", str(out)])
        assert code == 0
        assert "auc=" in capsys.readouterr().out
        metrics = json.loads(out.read_text())
        assert set(metrics) == {"auc", "pnr", "precision", "recall", "f1"}
        assert 0.0 <= metrics["auc"] <= 1.0

    def test_report_compares_two_runs(self, workspace, tmp_path, capsys):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        for out in (first, second):
            assert main(["evaluate", "--scores", str(workspace["scores"]),
                         "--manifest", str(workspace["corpus"]),
                         "--out", str(out)]) == 0
        assert main(["report", "--base", str(first), "--new", str(second)]) == 0
        table = capsys.readouterr().out
        for name in ("metric", "auc", "pnr", "precision", "recall", "f1"):
            assert name in table

    def test_ablate_grid(self, workspace, tmp_path):
        out = tmp_path / "ablation.json"
        assert main(["ablate", "--manifest", str(workspace["corpus"]),
                     "--schema", str(workspace["schema"]), "--out", str(out),
                     "--seeds", "0", "--k-values", "1", "--epochs", "1",
                     "--dim", "8", "--layers", "1", "--batch-size", "8",
                     "--ratios", "0.6,0.2,0.2"]) == 0
        rows = json.loads(out.read_text())
        assert len(rows) == 8 + 1
        assert all({"variant", "metrics"} <= set(row) for row in rows)


class TestRerank:
    def queries_file(self, workspace, tmp_path):
        manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
        urls = [doc["url"] for doc in manifest["docs"][:4]]
        path = tmp_path / "queries.jsonl"
        record = {"query": "q0", "results": [
            {"url": url, "relevance": 1.0 - 0.1 * i, "rel_grade": 3 - i}
            for i, url in enumerate(urls)]}
        path.write_text(json.dumps(record) + "\n")
        return path, urls

    def test_zero_weight_keeps_order(self, workspace, tmp_path, capsys):
        queries, urls = self.queries_file(workspace, tmp_path)
        out = tmp_path / "reranked.jsonl"
        assert main(["rerank-sim", "--scores", str(workspace["scores"]),
                     "--queries", str(queries), "--weight", "0.0",
                     "--depth", "4", "--out", str(out)]) == 0
        assert "delta=+0.0000" in capsys.readouterr().out
        record = json.loads(out.read_text())
        assert [r["url"] for r in record["results"]] == urls

    def test_full_weight_orders_by_stored_score(self, workspace, tmp_path):
        queries, _ = self.queries_file(workspace, tmp_path)
        out = tmp_path / "reranked.jsonl"
        assert main(["rerank-sim", "--scores", str(workspace["scores"]),
                     "--queries", str(queries), "--weight", "1.0",
                     "--depth", "4", "--out", str(out)]) == 0
        stored = {}
        for line in workspace["scores"].read_text().splitlines()[1:]:
            url, score, _ = line.split("\t")
            stored[url] = float(score)
        record = json.loads(out.read_text())
        got = [stored[r["url"]] for r in record["results"]]
        assert got == sorted(got, reverse=True)


class TestExitCodes:
    def test_bad_weight_is_usage_error(self, workspace, tmp_path):
        queries = tmp_path / "q.jsonl"
        queries.write_text(json.dumps({"query": "q", "results": []}) + "\n")
        assert main(["rerank-sim", "--scores", str(workspace["scores"]),
                     "--queries", str(queries), "--weight", "1.5"]) == 2

    def test_ingest_needs_exactly_one_source(self, tmp_path):
        assert main(["ingest", "--out", str(tmp_path / "g.jsonl")]) == 2

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["evaluate", "--scores", str(tmp_path / "absent.tsv"),
                     "--manifest", str(tmp_path)]) == 3

    def test_schema_mismatch_is_version_error(self, workspace, tmp_path):
        other = tmp_path / "other-schema.json"
        assert main(["fit-buckets", "--graphs", str(workspace["graphs"]),
                     "--out", str(other), "--min-count", "5",
                     "--target-buckets", "6", "--dim", "4"]) == 0
        assert main(["score", "--model", str(workspace["model"]),
                     "--schema", str(other),
                     "--graphs", str(workspace["graphs"]),
                     "--out", str(tmp_path / "s.tsv")]) == 4

    def test_help_exits_cleanly(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["--help"])
        assert err.value.code == 0
        with pytest.raises(SystemExit) as err:
            main(["no-such-command"])
        assert err.value.code == 2


class TestIngestAndConfig:
    def test_ingest_raw_html(self, tmp_path, capsys):
        page = tmp_path / "page.html"
        page.write_text("<html><body><h1>Hello</h1><p>two words</p></body></html>")
        out = tmp_path / "g.jsonl"
        assert main(["ingest", str(page), "--out", str(out),
                     "--category", "news"]) == 0
        assert "wrote 1 graphs" in capsys.readouterr().out
        record = json.loads(out.read_text().splitlines()[0])
        assert record["category"] == "news"

    def test_flags_override_config_file(self):
        args = build_parser().parse_args(
            ["train", "--manifest", "m", "--schema", "s", "--out", "o",
             "--epochs", "3"])
        config = _train_config(args, {"train": {"epochs": 9, "learning_rate": 0.5},
                                      "model": {"arch": "gin"}})
        assert config.epochs == 3           # explicit flag beats the file
        assert config.learning_rate == 0.5  # file beats the default
        assert config.model.arch == "gin"
        assert config.model.hidden_dim == 64

    def test_config_file_is_read(self, tmp_path, capsys):
        corpus = tmp_path / "corpus"
        assert main(["synth", "--out", str(corpus), "--num", "12",
                     "--categories", "news", "--seed", "3"]) == 0
        graphs = tmp_path / "g.jsonl"
        assert main(["ingest", "--manifest", str(corpus), "--out", str(graphs)]) == 0
        schema = tmp_path / "schema.json"
        assert main(["fit-buckets", "--graphs", str(graphs), "--out", str(schema),
                     "--min-count", "3", "--target-buckets", "4", "--dim", "4"]) == 0
        toml = tmp_path / "run.toml"
        toml.write_text('[train]\nepochs = 1\nbatch_size = 4\n'
                        '[model]\nhidden_dim = 4\nnum_layers = 1\narch = "gin"\n')
        model = tmp_path / "model.json"
        assert main(["train", "--manifest", str(corpus), "--schema", str(schema),
                     "--out", str(model), "--config", str(toml),
                     "--ratios", "0.6,0.2,0.2"]) == 0
        saved = json.loads(model.read_text())
        assert saved["config"]["arch"] == "gin"
        assert saved["config"]["num_layers"] == 1
        assert len(saved["meta"]["history"]) == 1
