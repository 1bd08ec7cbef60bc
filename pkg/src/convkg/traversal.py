"""Multi-source, relation-agnostic, type-alternating k-hop traversal.

Each grounded gene is expanded breadth-first over the graph with every edge
usable in both directions, except edges whose endpoints share a semantic type.
Filtering edges that way is enough to enforce "no two consecutive nodes of the
same type" along any path, so plain BFS levels give the constrained minimal
hop distance. Every target-typed node reached at level ``h`` records the gene
in its hop-``h`` support bin.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .graph_store import PropertyGraph
from .grounding import GroundedGeneSet


@dataclass(frozen=True)
class TraversalConfig:
    k: int = 2
    target_type: str = "CellType"
    enforce_type_alternation: bool = True

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")


@dataclass(frozen=True)
class SupportTable:
    """Hop-binned support of every candidate target.

    Attributes:
        candidates: target node ids reached by at least one gene, sorted.
        support: ``target -> {hop: ranks}``, ranks ascending; each gene sits in
            at most one bin per target (its minimal hop).
        df: ``rank -> number of candidates reachable from that gene``; every
            grounded gene has an entry, possibly 0.
        source_count: number of grounded genes traversed from.
        trace: optional BFS parent map per gene (``rank -> {node: (hop, parent)}``),
            filled only when traversing with ``trace=True``.
    """

    candidates: tuple[str, ...]
    support: Mapping[str, Mapping[int, tuple[int, ...]]]
    df: Mapping[int, int]
    source_count: int
    k: int
    trace: Mapping[int, Mapping[str, tuple[int, str]]] | None = field(default=None, compare=False)

    @property
    def target_count(self) -> int:
        return len(self.candidates)

    def hop_of(self, target: str, rank: int) -> int | None:
        for h, ranks in self.support.get(target, {}).items():
            if rank in ranks:
                return h
        return None

    def to_debug_json(self, grounded: GroundedGeneSet) -> str:
        """``{target: {hop: [symbols]}}`` as a deterministic JSON string."""
        symbol = {g.rank: g.symbol for g in grounded}
        dump = {
            t: {str(h): [symbol[r] for r in ranks] for h, ranks in sorted(self.support[t].items())}
            for t in self.candidates
        }
        return json.dumps(dump, indent=2, sort_keys=True)


def _expand(graph: PropertyGraph, frontier: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All ``(neighbor, parent)`` adjacency records of the frontier nodes."""
    starts = graph.indptr[frontier]
    lens = graph.indptr[frontier + 1] - starts
    total = int(lens.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens)
    idx = offsets + np.arange(total)
    return graph.adj_node[idx].astype(np.int64), np.repeat(frontier, lens)


def bfs_levels(
    graph: PropertyGraph,
    source: int,
    k: int,
    enforce_type_alternation: bool = True,
    with_parents: bool = False,
):
    """Yield ``(hop, nodes, parents)`` for each BFS level 1..k from ``source``.

    ``nodes`` are sorted node indices first reached at that hop. ``parents``
    (smallest-index predecessor of each node) is ``None`` unless requested.
    """
    seen = np.zeros(graph.node_count, dtype=bool)
    seen[source] = True
    frontier = np.array([source], dtype=np.int64)
    ntype = graph.node_type
    for h in range(1, k + 1):
        nbr, par = _expand(graph, frontier)
        if enforce_type_alternation and nbr.size:
            keep = ntype[nbr] != ntype[par]
            nbr, par = nbr[keep], par[keep]
        fresh = ~seen[nbr]
        nbr, par = nbr[fresh], par[fresh]
        if nbr.size == 0:
            return
        if with_parents:
            order = np.lexsort((par, nbr))
            nbr, par = nbr[order], par[order]
            first = np.ones(nbr.size, dtype=bool)
            first[1:] = nbr[1:] != nbr[:-1]
            nbr, parents = nbr[first], par[first]
        else:
            nbr, parents = np.unique(nbr), None
        seen[nbr] = True
        yield h, nbr, parents
        frontier = nbr


def multi_source_traverse(
    graph: PropertyGraph,
    grounded: GroundedGeneSet,
    config: TraversalConfig = TraversalConfig(),
    trace: bool = False,
) -> SupportTable:
    """Traverse from every grounded gene and bin each reached target by minimal hop."""
    target_code = graph.type_code(config.target_type)
    ntype = graph.node_type
    sources = [graph.index_of(g.node_id) for g in grounded]
    is_source = np.zeros(graph.node_count, dtype=bool)
    is_source[sources] = True

    bins: dict[int, dict[int, list[int]]] = {}
    df: dict[int, int] = {}
    traces: dict[int, dict[str, tuple[int, str]]] = {}
    ids = graph.node_ids
    for gene, src in zip(grounded, sources):
        reached = 0
        gene_trace: dict[str, tuple[int, str]] = {}
        for h, nodes, parents in bfs_levels(
            graph, src, config.k, config.enforce_type_alternation, with_parents=trace
        ):
            if trace:
                for v, p in zip(nodes.tolist(), parents.tolist()):
                    gene_trace[ids[v]] = (h, ids[p])
            hit = nodes[(ntype[nodes] == target_code) & ~is_source[nodes]]
            reached += hit.size
            for t in hit.tolist():
                bins.setdefault(t, {}).setdefault(h, []).append(gene.rank)
        df[gene.rank] = reached
        if trace:
            traces[gene.rank] = gene_trace

    # Genes are visited in rank order, so every bin is already rank-ascending.
    support = {
        ids[t]: {h: tuple(r) for h, r in sorted(hops.items())} for t, hops in bins.items()
    }
    return SupportTable(
        candidates=tuple(sorted(support)),
        support=support,
        df=df,
        source_count=len(sources),
        k=config.k,
        trace=traces if trace else None,
    )


def reachable_target_count(table: SupportTable, gene_rank: int) -> int:
    """df(g): how many candidate targets the gene at ``gene_rank`` reaches within k hops."""
    try:
        return table.df[gene_rank]
    except KeyError:
        raise KeyError(f"no grounded gene with rank {gene_rank}") from None


def shortest_alternating_path(
    graph: PropertyGraph,
    source: str,
    target: str,
    max_hops: int,
    enforce_type_alternation: bool = True,
) -> list[str] | None:
    """Lexicographically smallest node-id sequence among minimal-length paths, or ``None``.

    Distances to ``target`` are computed by BFS from the target side; the path
    is then built greedily from ``source``, always stepping to the smallest
    neighbor id that is one hop closer. Node indices follow id order, so
    "smallest index" is "smallest id".
    """
    s, t = graph.index_of(source), graph.index_of(target)
    if s == t:
        return [source]
    dist = {t: 0}
    for h, nodes, _ in bfs_levels(graph, t, max_hops, enforce_type_alternation):
        for v in nodes.tolist():
            dist[v] = h
        if s in dist:
            break
    if s not in dist:
        return None
    path = [s]
    ntype = graph.node_type
    u = s
    while u != t:
        want = dist[u] - 1
        lo, hi = graph.indptr[u], graph.indptr[u + 1]
        for v in graph.adj_node[lo:hi].tolist():  # ascending neighbor index
            if dist.get(v) == want and (not enforce_type_alternation or ntype[v] != ntype[u]):
                u = v
                break
        path.append(u)
    return [graph.node_ids[i] for i in path]


def edge_between(graph: PropertyGraph, u: str, v: str) -> tuple[str, str]:
    """Smallest ``(relation, direction)`` among the edges joining ``u`` to ``v``."""
    for nb in graph.neighbors(u):
        if nb.node_id == v:
            return nb.relation, nb.direction
    raise KeyError(f"no edge between {u!r} and {v!r}")
