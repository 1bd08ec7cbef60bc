import json
import socket

import pytest

from conftest import TOY_EDGES, TOY_NODES, write_tsv
from convkg.cli import main
from convkg.config import ConfigError, load_config, with_overrides
from convkg.synth import generate, planted_spec


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    generate(planted_spec(7, n_targets=20, marker_density=0.005, function_fanout=1), out)
    return out


def data_args(d, *extra):
    return [
        "--graph-nodes", str(d / "nodes.tsv"), "--graph-edges", str(d / "edges.tsv"),
        "--obo", str(d / "ontology.obo"), "--dataset", str(d / "dataset.jsonl"), *extra,
    ]


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*a, **kw):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


def test_graph_validate_and_stats(toy_files, capsys):
    nodes, edges = toy_files
    assert main(["graph", "validate", "--graph-nodes", str(nodes), "--graph-edges", str(edges)]) == 0
    assert "5 nodes, 4 edges" in capsys.readouterr().out
    assert main(["graph", "stats", "--graph-nodes", str(nodes), "--graph-edges", str(edges)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["node_count"] == 5 and stats["mean_degree"] == 1.6


def test_graph_duplicate_id_exits_1(tmp_path, capsys):
    nodes, edges = write_tsv(tmp_path, TOY_NODES + [TOY_NODES[0]], TOY_EDGES)
    assert main(["graph", "validate", "--graph-nodes", str(nodes), "--graph-edges", str(edges)]) == 1
    err = capsys.readouterr().err
    assert "HGNC:CD3E" in err and ":7:" in err


def test_stats_match_manifest(synth_dir, capsys):
    args = ["graph", "stats", "--manifest", str(synth_dir / "manifest.json")]
    assert main(args + data_args(synth_dir)) == 0
    assert "match manifest" in capsys.readouterr().err


def test_missing_setting_is_config_error(capsys):
    assert main(["graph", "stats"]) == 2
    assert main(["retrieve", "--all", "--config", "/does/not/exist.toml"]) == 2


def test_retrieve_planted_first(synth_dir, capsys, no_network):
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    first = manifest["sentences"][0]
    assert main(["retrieve", "--cell-id", first["cell_id"]] + data_args(synth_dir)) == 0
    (rec,) = json.loads(capsys.readouterr().out)
    assert rec["candidates"][0]["target"] == first["target"]
    assert len(rec["candidates"]) == 10


def test_retrieve_unknown_cell(synth_dir, capsys):
    assert main(["retrieve", "--cell-id", "nope"] + data_args(synth_dir)) == 1


def test_retrieve_all_writes_one_record_per_sample(synth_dir, tmp_path, no_network):
    assert main(["retrieve", "--all", "--dump-table", "--out", str(tmp_path)] + data_args(synth_dir)) == 0
    recs = json.loads((tmp_path / "retrieval.json").read_text())
    assert len(recs) == 100
    assert all("support_table" in r for r in recs)


def test_retrieve_no_groundable_genes(tmp_path, toy_files, capsys):
    ds = tmp_path / "d.jsonl"
    ds.write_text(json.dumps({"cell_id": "c", "genes": ["ZZZ", "RPL3"], "label": None}) + "\n")
    nodes, edges = toy_files
    args = ["retrieve", "--all", "--graph-nodes", str(nodes), "--graph-edges", str(edges), "--dataset", str(ds)]
    assert main(args) == 0
    (rec,) = json.loads(capsys.readouterr().out)
    assert rec["candidates"] == [] and rec["warning"] == "no groundable genes"


def test_retrieve_is_byte_identical_across_jobs(synth_dir, tmp_path):
    outs = []
    for jobs in (1, 3, 8, 1):
        out = tmp_path / f"j{jobs}-{len(outs)}"
        assert main(["retrieve", "--all", "--jobs", str(jobs), "--out", str(out)] + data_args(synth_dir)) == 0
        outs.append((out / "retrieval.json").read_bytes())
    assert len(set(outs)) == 1


def test_annotate_mock_and_eval(synth_dir, tmp_path, capsys, no_network):
    out = tmp_path / "run"
    assert main(["annotate", "--mock", "--out", str(out)] + data_args(synth_dir)) == 0
    assert "avg_calls=1.00" in capsys.readouterr().out
    rows = [json.loads(l) for l in (out / "results.jsonl").read_text().splitlines()]
    assert len(rows) == 100 and all(r["llm_calls"] == 1 for r in rows)
    assert main(["eval", str(out / "results.jsonl"), "--out", str(out)] + data_args(synth_dir)) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["avg_calls"] == 1.0
    assert metrics["exact_pct"] == 100.0
    assert "Exact" in (out / "metrics.txt").read_text()


def test_annotate_dry_run_and_paths(synth_dir, tmp_path, capsys):
    out = tmp_path / "dry"
    assert main(["annotate", "--dry-run", "--include-paths", "--out", str(out)] + data_args(synth_dir)) == 0
    rows = [json.loads(l) for l in (out / "results.jsonl").read_text().splitlines()]
    assert all(r["llm_calls"] == 0 for r in rows)
    prompts = sorted((out / "prompts").iterdir())
    assert len(prompts) == 100
    text = prompts[0].read_text()
    assert "path: " in text and "[Evidence 1]" in text


def test_annotate_transport_failure_exits_3(synth_dir, tmp_path, capsys):
    # nothing listens on port 9 of localhost; every attempt fails fast
    args = ["annotate", "--base-url", "http://127.0.0.1:9/v1", "--out", str(tmp_path)]
    assert main(args + data_args(synth_dir)) == 3
    rows = [json.loads(l) for l in (tmp_path / "results.jsonl").read_text().splitlines()]
    assert all(r["llm_calls"] == 0 and r["error"].startswith("transport") for r in rows)


def test_annotate_without_endpoint_is_config_error(synth_dir, tmp_path):
    assert main(["annotate", "--out", str(tmp_path)] + data_args(synth_dir)) == 2


def test_eval_mismatch_exits_1(synth_dir, tmp_path):
    res = tmp_path / "r.jsonl"
    res.write_text(json.dumps({"cell_id": "other", "predicted": None}) + "\n")
    assert main(["eval", str(res)] + data_args(synth_dir)) == 1


def test_synth_command_is_deterministic(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_targets": 4, "n_genes": 300, "n_celltypes": 10, "n_function_nodes": 40}))
    for name in ("a", "b"):
        assert main(["synth", "--spec", str(spec), "--seed", "1", "--out", str(tmp_path / name)]) == 0
    for f in ("nodes.tsv", "edges.tsv", "dataset.jsonl", "ontology.obo", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_infeasible_exits_1(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_targets": 500}))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "x")]) == 1


def test_obo_export(synth_dir, tmp_path, capsys):
    assert main(["obo-export", "--obo", str(synth_dir / "ontology.obo"), "--out", str(tmp_path)]) == 0
    assert main(["graph", "validate", "--graph-nodes", str(tmp_path / "nodes.tsv"),
                 "--graph-edges", str(tmp_path / "edges.tsv")]) == 0


def test_config_file_and_overrides(tmp_path):
    cfg_path = tmp_path / "run.toml"
    cfg_path.write_text(
        'out = "o"\n[paths]\ndataset = "d.jsonl"\n[traversal]\nk = 3\n'
        '[scoring]\nalpha = [1.0, 0.4, 0.1]\ntop_k = 5\n[annotate]\nmax_in_flight = 2\n'
    )
    cfg = load_config(cfg_path)
    assert cfg.traversal.k == 3 and cfg.scoring.K == 5 and cfg.scoring.alpha == (1.0, 0.4, 0.1)
    cfg2 = with_overrides(cfg, k=1, top_k=None, gamma=0.3, jobs=6)
    assert cfg2.traversal.k == 1 and cfg2.scoring.K == 5
    assert cfg2.scoring.alpha is None and cfg2.scoring.gamma == 0.3
    assert cfg2.annotate.max_in_flight == 6
    defaults = load_config(None)
    assert (defaults.traversal.k, defaults.scoring.K, defaults.annotate.include_paths) == (2, 10, False)


@pytest.mark.parametrize(
    "text",
    ['[bogus]\nx = 1\n', '[traversal]\nk = 0\n', '[scoring]\nalpha = [0.5, 1.0]\n', 'not = = toml'],
)
def test_bad_config(tmp_path, text):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)
