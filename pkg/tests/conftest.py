from __future__ import annotations

import sys
from pathlib import Path

import pytest

from convkg.graph_store import GraphNode, PropertyGraph
from convkg.grounding import GroundedGene, GroundedGeneSet

sys.path.insert(0, str(Path(__file__).parent))


def make_graph(nodes, edges, semantic_types=None) -> PropertyGraph:
    """Graph from ``(id, type, name[, synonyms])`` tuples and ``(src, rel, dst)`` edges."""
    recs = [
        GraphNode(n[0], n[1], n[2], frozenset(n[3]) if len(n) > 3 else frozenset())
        for n in nodes
    ]
    if semantic_types is None:
        return PropertyGraph.from_tables(recs, edges)
    return PropertyGraph.from_tables(recs, edges, semantic_types)


def grounded_of(node_ids, ranks=None) -> GroundedGeneSet:
    """Grounded set whose symbols equal the node ids; ranks default to 0..n-1."""
    ranks = list(ranks) if ranks is not None else list(range(len(node_ids)))
    genes = tuple(GroundedGene(n, n, r) for n, r in zip(node_ids, ranks))
    return GroundedGeneSet(genes, (), max(ranks, default=-1) + 1)


def write_tsv(tmp_path: Path, node_lines, edge_lines, name="g"):
    nodes = tmp_path / f"{name}_nodes.tsv"
    edges = tmp_path / f"{name}_edges.tsv"
    nodes.write_text("id\tsemantic_type\tname\tsynonyms\n" + "".join(l + "\n" for l in node_lines))
    edges.write_text("source\trelation\ttarget\n" + "".join(l + "\n" for l in edge_lines))
    return nodes, edges


TOY_NODES = [
    "HGNC:CD3E\tGene\tCD3E\tT3E|CD3epsilon",
    "HGNC:CD8A\tGene\tCD8A\t",
    "GO:0002250\tBiologicalProcess\tadaptive immune response\t",
    "CL:0000084\tCellType\tT cell\tT-cell|T lymphocyte",
    "CL:0000236\tCellType\tB cell\t",
]
TOY_EDGES = [
    "HGNC:CD3E\tIS_MARKER_FOR\tCL:0000084",
    "HGNC:CD8A\tPARTICIPATES_IN\tGO:0002250",
    "CL:0000084\tCAPABLE_OF\tGO:0002250",
    "CL:0000236\tCAPABLE_OF\tGO:0002250",
]


@pytest.fixture
def toy_files(tmp_path):
    return write_tsv(tmp_path, TOY_NODES, TOY_EDGES, "toy")


@pytest.fixture
def two_hop_graph():
    """Gene G -PARTICIPATES_IN-> P <-CAPABLE_OF- CellType C, plus a 1-hop marker M -> C."""
    return make_graph(
        [("G", "Gene", "G"), ("P", "BiologicalProcess", "P"), ("C", "CellType", "C"), ("M", "Gene", "M")],
        [("G", "PARTICIPATES_IN", "P"), ("C", "CAPABLE_OF", "P"), ("M", "IS_MARKER_FOR", "C")],
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
