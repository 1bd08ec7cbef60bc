"""Cell-sentence ingestion and gene grounding.

A cell sentence is a rank-ordered list of gene symbols. Grounding drops
housekeeping genes, resolves the rest to ``Gene`` nodes of the graph and keeps
each survivor's *original* zero-based position as its rank.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .graph_store import PropertyGraph

logger = logging.getLogger(__name__)

# Rank convention used by the rank weight: zero-based position in the
# unfiltered cell sentence.
RANK_BASE = 0
RANK_BEFORE_FILTERING = True

DEFAULT_HOUSEKEEPING_PREFIXES = frozenset({"RPL", "MT-"})


class DatasetParseError(ValueError):
    pass


@dataclass(frozen=True)
class CellSentence:
    cell_id: str
    gene_symbols: tuple[str, ...]
    gold_label: str | None = None

    def __post_init__(self):
        if not self.gene_symbols:
            raise DatasetParseError(f"cell {self.cell_id!r}: empty gene list")
        seen: set[str] = set()
        for sym in self.gene_symbols:
            if sym in seen:
                raise DatasetParseError(f"cell {self.cell_id!r}: duplicate symbol {sym!r}")
            seen.add(sym)

    def truncated(self, n: int) -> CellSentence:
        """The first ``n`` genes of this sentence."""
        return CellSentence(self.cell_id, self.gene_symbols[:n], self.gold_label)


@dataclass(frozen=True)
class GroundedGene:
    symbol: str
    node_id: str
    rank: int


@dataclass(frozen=True)
class FilteredSymbol:
    symbol: str
    rank: int
    reason: str  # "housekeeping" or "unmatched"


@dataclass(frozen=True)
class GroundedGeneSet:
    genes: tuple[GroundedGene, ...]
    filtered: tuple[FilteredSymbol, ...] = ()
    sentence_length: int = 0

    def __len__(self) -> int:
        return len(self.genes)

    def __iter__(self):
        return iter(self.genes)

    def __getitem__(self, i):
        return self.genes[i]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(g.rank for g in self.genes)

    def by_rank(self) -> dict[int, GroundedGene]:
        return {g.rank: g for g in self.genes}


@dataclass(frozen=True)
class FilterConfig:
    housekeeping_prefixes: frozenset[str] = DEFAULT_HOUSEKEEPING_PREFIXES
    case_sensitive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "housekeeping_prefixes", frozenset(self.housekeeping_prefixes))
        if any(not p for p in self.housekeeping_prefixes):
            raise ValueError("housekeeping prefixes must be non-empty strings")

    def is_housekeeping(self, symbol: str) -> bool:
        if self.case_sensitive:
            return any(symbol.startswith(p) for p in self.housekeeping_prefixes)
        upper = symbol.upper()
        return any(upper.startswith(p.upper()) for p in self.housekeeping_prefixes)


def parse_cell_sentence(obj: dict, where: str = "") -> CellSentence:
    prefix = f"{where}: " if where else ""
    if not isinstance(obj, dict):
        raise DatasetParseError(f"{prefix}expected a JSON object")
    cell_id, genes, label = obj.get("cell_id"), obj.get("genes"), obj.get("label")
    if not isinstance(cell_id, str) or not cell_id:
        raise DatasetParseError(f"{prefix}missing or invalid 'cell_id'")
    if not isinstance(genes, list) or not all(isinstance(g, str) and g for g in genes):
        raise DatasetParseError(f"{prefix}'genes' must be a list of non-empty strings")
    if label is not None and not isinstance(label, str):
        raise DatasetParseError(f"{prefix}'label' must be a string or null")
    try:
        return CellSentence(cell_id, tuple(genes), label)
    except DatasetParseError as exc:
        raise DatasetParseError(f"{prefix}{exc}") from None


def parse_cell_sentences(path: str | Path) -> list[CellSentence]:
    """Read the dataset JSONL, one ``{"cell_id", "genes", "label"}`` object per line."""
    path = Path(path)
    out: list[CellSentence] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(f"{where}: malformed JSON ({exc.msg})") from None
            out.append(parse_cell_sentence(obj, where))
    return out


def write_cell_sentences(sentences: Iterable[CellSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sentences:
            rec = {"cell_id": s.cell_id, "genes": list(s.gene_symbols), "label": s.gold_label}
            fh.write(json.dumps(rec) + "\n")


class GeneIndex:
    """Case-insensitive symbol lookup over the ``Gene`` nodes of a graph.

    Lookup order is canonical name, then the id's local part (the "symbol
    field", e.g. ``HGNC:CD3E`` -> ``CD3E``), then synonyms. Ambiguous keys map
    to the smallest node id.
    """

    def __init__(self, graph: PropertyGraph, gene_type: str = "Gene"):
        by_name: dict[str, set[str]] = {}
        by_symbol: dict[str, set[str]] = {}
        by_syn: dict[str, set[str]] = {}
        if gene_type in graph.semantic_types:
            for nid in graph.nodes_of_type(gene_type):
                i = graph.index_of(nid)
                by_name.setdefault(graph.names[i].casefold(), set()).add(nid)
                by_symbol.setdefault(nid.rsplit(":", 1)[-1].casefold(), set()).add(nid)
                for syn in graph.synonyms[i]:
                    by_syn.setdefault(syn.casefold(), set()).add(nid)
        self._tiers = [self._pick(t, kind) for t, kind in
                       ((by_name, "name"), (by_symbol, "symbol"), (by_syn, "synonym"))]

    @staticmethod
    def _pick(index: dict[str, set[str]], kind: str) -> dict[str, str]:
        out = {}
        for key, ids in index.items():
            if len(ids) > 1:
                chosen = min(ids)
                logger.warning("gene %s %r matches %d nodes; using %s", kind, key, len(ids), chosen)
                out[key] = chosen
            else:
                out[key] = next(iter(ids))
        return out

    def lookup(self, symbol: str) -> str | None:
        key = symbol.casefold()
        for tier in self._tiers:
            if key in tier:
                return tier[key]
        return None


_INDEX_CACHE: dict[int, tuple[PropertyGraph, GeneIndex]] = {}


def gene_index(graph: PropertyGraph) -> GeneIndex:
    """Cached :class:`GeneIndex` for a graph (graphs are immutable)."""
    hit = _INDEX_CACHE.get(id(graph))
    if hit is None or hit[0] is not graph:
        hit = (graph, GeneIndex(graph))
        _INDEX_CACHE[id(graph)] = hit
    return hit[1]


def ground(
    sentence: CellSentence,
    graph: PropertyGraph,
    filter: FilterConfig = FilterConfig(),
    index: GeneIndex | None = None,
) -> GroundedGeneSet:
    """Resolve a cell sentence to graph genes, dropping housekeeping and unmatched symbols."""
    index = index or gene_index(graph)
    genes: list[GroundedGene] = []
    dropped: list[FilteredSymbol] = []
    used: set[str] = set()
    for rank, symbol in enumerate(sentence.gene_symbols, start=RANK_BASE):
        if filter.is_housekeeping(symbol):
            dropped.append(FilteredSymbol(symbol, rank, "housekeeping"))
            continue
        node_id = index.lookup(symbol)
        if node_id is None:
            logger.debug("cell %s: no Gene node for %r", sentence.cell_id, symbol)
            dropped.append(FilteredSymbol(symbol, rank, "unmatched"))
            continue
        if node_id in used:
            # Two aliases of the same gene: the better-ranked one already counts.
            dropped.append(FilteredSymbol(symbol, rank, "duplicate"))
            continue
        used.add(node_id)
        genes.append(GroundedGene(symbol, node_id, rank))
    return GroundedGeneSet(tuple(genes), tuple(dropped), len(sentence.gene_symbols))


def ground_symbols(symbols: Sequence[str], graph: PropertyGraph, **kwargs) -> GroundedGeneSet:
    return ground(CellSentence("_", tuple(symbols)), graph, **kwargs)
