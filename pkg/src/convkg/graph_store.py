"""Immutable typed property graph with relation-agnostic bidirectional adjacency.

Nodes and edges are read from line-oriented TSV files::

    nodes:  id <TAB> semantic_type <TAB> name <TAB> synonyms   (synonyms '|'-separated)
    edges:  source <TAB> relation <TAB> target

Both files start with a header row; lines starting with ``#`` are comments.

Internally the graph is stored as a CSR structure over node indices. Node
indices follow the lexicographic order of node ids, so sorting by index is the
same as sorting by id. Every edge is stored twice (once per endpoint) with a
direction flag, which is what makes :func:`neighbors` relation-agnostic.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_SEMANTIC_TYPES: tuple[str, ...] = (
    "Gene",
    "CellType",
    "BiologicalProcess",
    "MolecularFunction",
    "CellularComponent",
    "Pathway",
    "Anatomy",
    "Disease",
    "Phenotype",
)

NODES_HEADER = ("id", "semantic_type", "name", "synonyms")
EDGES_HEADER = ("source", "relation", "target")

OUT, IN = 0, 1
DIRECTION_NAMES = ("out", "in")

_MAX_REPORTED_ERRORS = 50


class GraphLoadError(ValueError):
    """Raised when node/edge files fail validation. Carries every error found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        shown = self.errors[:_MAX_REPORTED_ERRORS]
        msg = "; ".join(shown)
        if len(self.errors) > len(shown):
            msg += f"; ... ({len(self.errors) - len(shown)} more)"
        super().__init__(msg)


@dataclass(frozen=True)
class GraphNode:
    id: str
    semantic_type: str
    name: str
    synonyms: frozenset[str] = frozenset()


class Neighbor(NamedTuple):
    node_id: str
    relation: str
    direction: str  # "out" if the stored edge points away from the queried node


@dataclass(frozen=True)
class StatsReport:
    node_count: int
    edge_count: int
    nodes_per_type: dict[str, int] = field(default_factory=dict)
    edges_per_relation: dict[str, int] = field(default_factory=dict)
    mean_degree: float = 0.0

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "nodes_per_type": dict(self.nodes_per_type),
            "edges_per_relation": dict(self.edges_per_relation),
            "mean_degree": self.mean_degree,
        }


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class PropertyGraph:
    """Typed multigraph, read-only once constructed.

    Use :func:`load_graph` or :meth:`from_tables` to build one.

    Attributes:
        semantic_types: the closed set of allowed node types; ``node_type``
            holds indices into it.
        relations: sorted relation names; ``adj_rel`` holds indices into it.
        indptr, adj_node, adj_rel, adj_dir: CSR adjacency. For node ``i`` the
            incident edge records live in ``indptr[i]:indptr[i+1]``, sorted by
            neighbor index, then relation, then direction.
    """

    def __init__(
        self,
        node_ids: Sequence[str],
        node_type: np.ndarray,
        names: Sequence[str],
        synonyms: Sequence[frozenset[str]],
        edge_src: np.ndarray,
        edge_rel: np.ndarray,
        edge_dst: np.ndarray,
        relations: Sequence[str],
        semantic_types: Sequence[str] = DEFAULT_SEMANTIC_TYPES,
    ):
        # Callers guarantee node_ids are sorted and unique; from_tables enforces it.
        self.semantic_types = tuple(semantic_types)
        self.relations = tuple(relations)
        self.node_ids = tuple(node_ids)
        self.names = tuple(names)
        self.synonyms = tuple(synonyms)
        self.node_type = _frozen(np.asarray(node_type, dtype=np.int16))
        self._index = {nid: i for i, nid in enumerate(self.node_ids)}

        n = len(self.node_ids)
        src = np.asarray(edge_src, dtype=np.int64)
        dst = np.asarray(edge_dst, dtype=np.int64)
        rel = np.asarray(edge_rel, dtype=np.int32)
        self.edge_src = _frozen(src.astype(np.int32))
        self.edge_dst = _frozen(dst.astype(np.int32))
        self.edge_rel = _frozen(rel.astype(np.int16))

        owner = np.concatenate([src, dst])
        other = np.concatenate([dst, src])
        rels = np.concatenate([rel, rel])
        dirs = np.concatenate(
            [np.full(len(src), OUT, dtype=np.int8), np.full(len(src), IN, dtype=np.int8)]
        )
        order = np.lexsort((dirs, rels, other, owner))
        self.adj_node = _frozen(other[order].astype(np.int32))
        self.adj_rel = _frozen(rels[order].astype(np.int16))
        self.adj_dir = _frozen(dirs[order])
        counts = np.bincount(owner, minlength=n) if n else np.zeros(0, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        self.indptr = _frozen(indptr)

    @classmethod
    def from_tables(
        cls,
        nodes: Iterable[GraphNode],
        edges: Iterable[tuple[str, str, str]],
        semantic_types: Sequence[str] = DEFAULT_SEMANTIC_TYPES,
    ) -> PropertyGraph:
        """Build a validated graph from in-memory node and ``(source, relation, target)`` records."""
        type_code = {t: i for i, t in enumerate(semantic_types)}
        errors: list[str] = []
        by_id: dict[str, GraphNode] = {}
        for node in nodes:
            if node.id in by_id:
                errors.append(f"duplicate node id {node.id!r}")
                continue
            if node.semantic_type not in type_code:
                errors.append(f"unknown semantic type {node.semantic_type!r} for node {node.id!r}")
                continue
            if not node.name:
                errors.append(f"empty name for node {node.id!r}")
                continue
            by_id[node.id] = node
        ids = sorted(by_id)
        index = {nid: i for i, nid in enumerate(ids)}
        raw_edges: list[tuple[int, str, int]] = []
        for s, r, t in edges:
            if s not in index or t not in index:
                missing = s if s not in index else t
                errors.append(f"edge references unknown node id {missing!r}")
            elif s == t:
                errors.append(f"self-loop on {s!r}")
            elif not r:
                errors.append(f"empty relation on edge {s!r} -> {t!r}")
            else:
                raw_edges.append((index[s], r, index[t]))
        if errors:
            raise GraphLoadError(errors)
        return cls._assemble(ids, by_id, raw_edges, semantic_types)

    @classmethod
    def _assemble(cls, ids, by_id, raw_edges, semantic_types) -> PropertyGraph:
        type_code = {t: i for i, t in enumerate(semantic_types)}
        relations = sorted({r for _, r, _ in raw_edges})
        rel_code = {r: i for i, r in enumerate(relations)}
        m = len(raw_edges)
        src = np.fromiter((e[0] for e in raw_edges), dtype=np.int64, count=m)
        rel = np.fromiter((rel_code[e[1]] for e in raw_edges), dtype=np.int32, count=m)
        dst = np.fromiter((e[2] for e in raw_edges), dtype=np.int64, count=m)
        nodes = [by_id[i] for i in ids]
        return cls(
            node_ids=ids,
            node_type=np.array([type_code[n.semantic_type] for n in nodes], dtype=np.int16),
            names=[n.name for n in nodes],
            synonyms=[n.synonyms for n in nodes],
            edge_src=src,
            edge_rel=rel,
            edge_dst=dst,
            relations=relations,
            semantic_types=semantic_types,
        )

    # -- node access -------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def edge_count(self) -> int:
        return len(self.edge_src)

    def __len__(self) -> int:
        return self.node_count

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._index

    def index_of(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def node(self, node_id: str) -> GraphNode:
        i = self.index_of(node_id)
        return GraphNode(node_id, self.type_of(i), self.names[i], self.synonyms[i])

    def type_of(self, index: int) -> str:
        return self.semantic_types[self.node_type[index]]

    def type_code(self, semantic_type: str) -> int:
        try:
            return self.semantic_types.index(semantic_type)
        except ValueError:
            raise KeyError(f"unknown semantic type {semantic_type!r}") from None

    def nodes_of_type(self, semantic_type: str) -> list[str]:
        code = self.type_code(semantic_type)
        return [self.node_ids[i] for i in np.flatnonzero(self.node_type == code)]

    def degree(self, node_id: str) -> int:
        i = self.index_of(node_id)
        return int(self.indptr[i + 1] - self.indptr[i])

    def neighbors(self, node_id: str) -> list[Neighbor]:
        i = self.index_of(node_id)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [
            Neighbor(self.node_ids[v], self.relations[r], DIRECTION_NAMES[d])
            for v, r, d in zip(
                self.adj_node[lo:hi].tolist(),
                self.adj_rel[lo:hi].tolist(),
                self.adj_dir[lo:hi].tolist(),
            )
        ]

    def edges(self) -> Iterable[tuple[str, str, str]]:
        ids, rels = self.node_ids, self.relations
        for s, r, t in zip(self.edge_src.tolist(), self.edge_rel.tolist(), self.edge_dst.tolist()):
            yield ids[s], rels[r], ids[t]

    def __repr__(self) -> str:
        return f"PropertyGraph(nodes={self.node_count}, edges={self.edge_count})"


# -- module-level API -------------------------------------------------------


def neighbors(graph: PropertyGraph, node: str) -> list[Neighbor]:
    """All incident edges of ``node`` in both directions, ordered by neighbor id then relation."""
    return graph.neighbors(node)


def graph_stats(graph: PropertyGraph) -> StatsReport:
    n, m = graph.node_count, graph.edge_count
    type_counts = np.bincount(graph.node_type, minlength=len(graph.semantic_types)) if n else []
    rel_counts = np.bincount(graph.edge_rel, minlength=len(graph.relations)) if m else []
    return StatsReport(
        node_count=n,
        edge_count=m,
        nodes_per_type={t: int(c) for t, c in zip(graph.semantic_types, type_counts) if c},
        edges_per_relation={r: int(c) for r, c in zip(graph.relations, rel_counts)},
        mean_degree=(2.0 * m / n) if n else 0.0,
    )


def _data_lines(path: Path):
    """Yield ``(line_number, fields)`` for non-comment, non-blank lines after the header."""
    with open(path, encoding="utf-8") as fh:
        header_seen = False
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if not header_seen:
                header_seen = True
                yield lineno, None, fields
                continue
            yield lineno, fields, None


def load_graph(
    nodes_path: str | Path,
    edges_path: str | Path,
    semantic_types: Sequence[str] = DEFAULT_SEMANTIC_TYPES,
) -> PropertyGraph:
    """Load and validate a graph from the nodes/edges TSV pair.

    Validation is all-or-nothing: every problem is collected with its file and
    line number and a single :class:`GraphLoadError` is raised.
    """
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)
    allowed = set(semantic_types)
    errors: list[str] = []
    by_id: dict[str, GraphNode] = {}
    first_line: dict[str, int] = {}

    for lineno, fields, header in _data_lines(nodes_path):
        where = f"{nodes_path.name}:{lineno}"
        if header is not None:
            if tuple(h.strip() for h in header) not in (NODES_HEADER, NODES_HEADER[:3]):
                errors.append(f"{where}: bad header {header!r}, expected {NODES_HEADER!r}")
            continue
        if len(fields) not in (3, 4):
            errors.append(f"{where}: malformed line, expected 3-4 tab-separated fields, got {len(fields)}")
            continue
        nid, stype, name = fields[0].strip(), fields[1].strip(), fields[2].strip()
        syn_field = fields[3] if len(fields) == 4 else ""
        if not nid or not name:
            errors.append(f"{where}: malformed line, empty id or name")
            continue
        if stype not in allowed:
            errors.append(f"{where}: unknown semantic type {stype!r} for node {nid!r}")
            continue
        if nid in by_id:
            errors.append(f"{where}: duplicate node id {nid!r} (first defined at line {first_line[nid]})")
            continue
        syns = frozenset(s.strip() for s in syn_field.split("|") if s.strip())
        by_id[nid] = GraphNode(nid, stype, name, syns)
        first_line[nid] = lineno

    ids = sorted(by_id)
    index = {nid: i for i, nid in enumerate(ids)}
    raw_edges: list[tuple[int, str, int]] = []
    for lineno, fields, header in _data_lines(edges_path):
        where = f"{edges_path.name}:{lineno}"
        if header is not None:
            if tuple(h.strip() for h in header) != EDGES_HEADER:
                errors.append(f"{where}: bad header {header!r}, expected {EDGES_HEADER!r}")
            continue
        if len(fields) != 3:
            errors.append(f"{where}: malformed line, expected 3 tab-separated fields, got {len(fields)}")
            continue
        s, r, t = (f.strip() for f in fields)
        if not r:
            errors.append(f"{where}: malformed line, empty relation")
            continue
        si, ti = index.get(s), index.get(t)
        if si is None or ti is None:
            missing = s if si is None else t
            errors.append(f"{where}: edge references unknown node id {missing!r}")
            continue
        if si == ti:
            errors.append(f"{where}: self-loop on {s!r}")
            continue
        raw_edges.append((si, r, ti))

    if errors:
        raise GraphLoadError(errors)
    graph = PropertyGraph._assemble(ids, by_id, raw_edges, semantic_types)
    logger.info("loaded graph: %d nodes, %d edges", graph.node_count, graph.edge_count)
    return graph


def write_graph(
    nodes: Iterable[GraphNode],
    edges: Iterable[tuple[str, str, str]],
    nodes_path: str | Path,
    edges_path: str | Path,
) -> None:
    """Write node and edge records in the TSV format read by :func:`load_graph`."""
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(NODES_HEADER) + "\n")
        for n in nodes:
            fh.write(f"{n.id}\t{n.semantic_type}\t{n.name}\t{'|'.join(sorted(n.synonyms))}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(EDGES_HEADER) + "\n")
        for s, r, t in edges:
            fh.write(f"{s}\t{r}\t{t}\n")

