import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph
from convkg.grounding import (
    RANK_BASE,
    CellSentence,
    DatasetParseError,
    FilterConfig,
    GeneIndex,
    ground_symbols,
    parse_cell_sentences,
    write_cell_sentences,
)


@pytest.fixture
def small_graph():
    return make_graph(
        [
            ("HGNC:CD3E", "Gene", "CD3E", ["T3E"]),
            ("HGNC:MS4A1", "Gene", "MS4A1", ["CD20"]),
            ("NCBI:925", "Gene", "CD8A"),
            ("CL:0000084", "CellType", "T cell"),
        ],
        [("HGNC:CD3E", "IS_MARKER_FOR", "CL:0000084")],
    )


def write_jsonl(tmp_path, rows):
    p = tmp_path / "d.jsonl"
    p.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows))
    return p


def test_fifty_gene_line(tmp_path):
    genes = [f"G{i}" for i in range(50)]
    (s,) = parse_cell_sentences(write_jsonl(tmp_path, [{"cell_id": "c1", "genes": genes, "label": None}]))
    assert s.gene_symbols == tuple(genes)
    assert RANK_BASE == 0
    grounded = ground_symbols(genes, make_graph([(g, "Gene", g) for g in genes], []), filter=FilterConfig(()))
    assert grounded.ranks == tuple(range(50))


@pytest.mark.parametrize(
    "row, needle",
    [
        ({"cell_id": "c", "genes": [], "label": None}, "empty gene list"),
        ({"cell_id": "c", "genes": ["CD3E", "CD8A", "CD3E"]}, "CD3E"),
        ({"genes": ["A"]}, "cell_id"),
        ({"cell_id": "c", "genes": "A"}, "genes"),
        ({"cell_id": "c", "genes": ["A"], "label": 3}, "label"),
        ("{not json", "malformed JSON"),
    ],
)
def test_parse_errors(tmp_path, row, needle):
    with pytest.raises(DatasetParseError, match=needle) as exc:
        parse_cell_sentences(write_jsonl(tmp_path, [{"cell_id": "ok", "genes": ["X"]}, row]))
    assert "d.jsonl:2" in str(exc.value)


def test_jsonl_roundtrip(tmp_path):
    data = [CellSentence("a", ("X", "Y"), "CL:1"), CellSentence("b", ("Z",), None)]
    write_cell_sentences(data, tmp_path / "o.jsonl")
    assert parse_cell_sentences(tmp_path / "o.jsonl") == data


def test_housekeeping_and_unmatched(small_graph):
    g = ground_symbols(["CD3E", "RPL13A", "ZZZ9"], small_graph)
    assert [(x.symbol, x.node_id, x.rank) for x in g] == [("CD3E", "HGNC:CD3E", 0)]
    assert {(f.symbol, f.rank, f.reason) for f in g.filtered} == {
        ("RPL13A", 1, "housekeeping"),
        ("ZZZ9", 2, "unmatched"),
    }


def test_all_housekeeping_is_empty(small_graph):
    g = ground_symbols(["RPL3", "MT-CO1", "rpl13a"], small_graph)
    assert len(g) == 0
    assert g.sentence_length == 3


def test_lookup_order_and_case(small_graph):
    g = ground_symbols(["cd20", "Cd8a", "925", "t3e"], small_graph)
    assert [(x.node_id, x.rank) for x in g] == [
        ("HGNC:MS4A1", 0),  # synonym
        ("NCBI:925", 1),  # canonical name
        ("HGNC:CD3E", 3),  # synonym
    ]
    # "925" is the id's local part of CD8A, already grounded at rank 1
    assert [(f.symbol, f.reason) for f in g.filtered] == [("925", "duplicate")]


def test_non_gene_nodes_are_not_grounded(small_graph):
    assert len(ground_symbols(["T cell", "CL:0000084", "0000084"], small_graph)) == 0


def test_ambiguous_synonym_resolves_to_smallest_id(caplog):
    graph = make_graph([("B:2", "Gene", "BBB", ["SHARED"]), ("A:1", "Gene", "AAA", ["SHARED"])], [])
    with caplog.at_level("WARNING"):
        idx = GeneIndex(graph)
    assert idx.lookup("shared") == "A:1"
    assert "SHARED".casefold() in caplog.text


def test_name_beats_synonym():
    graph = make_graph([("X:1", "Gene", "ALPHA"), ("X:2", "Gene", "BETA", ["ALPHA"])], [])
    assert ground_symbols(["alpha"], graph)[0].node_id == "X:1"


def test_forty_eight_of_fifty():
    symbols = [f"GENE{i:02d}" for i in range(50)]
    missing = {"GENE07", "GENE31"}
    graph = make_graph([(f"HGNC:{s}", "Gene", s) for s in symbols if s not in missing], [])
    g = ground_symbols(symbols, graph)
    assert len(g) == 48
    assert {f.symbol for f in g.filtered} == missing
    assert all(f.reason == "unmatched" for f in g.filtered)


def test_case_sensitive_prefixes():
    f = FilterConfig(("RPL",), case_sensitive=True)
    assert not f.is_housekeeping("rpl5") and f.is_housekeeping("RPL5")
    assert FilterConfig(("RPL",)).is_housekeeping("rpl5")
    with pytest.raises(ValueError):
        FilterConfig(("",))


symbol_lists = st.lists(
    st.text(alphabet="ABCDEFGHMPRLT-0123", min_size=1, max_size=6), min_size=1, max_size=30, unique=True
)


@settings(max_examples=60, deadline=None)
@given(symbol_lists, st.sets(st.text(alphabet="ABCDEFGHMPRLT-0123", min_size=1, max_size=6), max_size=20))
def test_grounding_invariants(symbols, in_graph):
    graph = make_graph([(f"HGNC:{s}", "Gene", s) for s in sorted(in_graph)], [])
    g = ground_symbols(symbols, graph)
    assert len(g) <= len(symbols)
    ranks = g.ranks
    assert all(a < b for a, b in zip(ranks, ranks[1:]))
    assert all(0 <= r < len(symbols) for r in ranks)
    assert sorted(ranks + tuple(f.rank for f in g.filtered)) == list(range(len(symbols)))
    assert ground_symbols(symbols, graph) == g


@settings(max_examples=40, deadline=None)
@given(symbol_lists)
def test_identity_without_filters(symbols):
    upper = list(dict.fromkeys(s.upper() for s in symbols))
    graph = make_graph([(f"ID:{i}", "Gene", s) for i, s in enumerate(upper)], [])
    g = ground_symbols(upper, graph, filter=FilterConfig(()))
    assert [x.symbol for x in g] == upper
    assert g.ranks == tuple(range(len(upper)))


def test_grounding_ignores_adjacency(small_graph):
    nodes = [small_graph.node(i) for i in small_graph.node_ids]
    bare = make_graph([(n.id, n.semantic_type, n.name, n.synonyms) for n in nodes], [])
    syms = ["CD3E", "T3E", "CD20", "ZZZ"]
    assert ground_symbols(syms, small_graph) == ground_symbols(syms, bare)
