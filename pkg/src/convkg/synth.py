"""Synthetic typed graphs and cell-sentence datasets with planted convergence.

Each planted target is a cell type with a private gene program: supporters
reach it either directly (``IS_MARKER_FOR``, 1 hop) or through a program
function node (``Gene -PARTICIPATES_IN-> BP <-CAPABLE_OF- CellType``, 2 hops).
Sentences for a planted target spread its supporters across the ranked list,
put a few genes from a different program near the top as confounders, and fill
the rest with genes outside every program.

Two families of random edges are layered on top:

* background edges, controlled by ``marker_density`` (random Gene->CellType
  markers) and ``function_fanout`` (random Gene/CellType->function links);
* noise edges, ``noise_fraction`` times the number of all other edges,
  joining random genes to random cell-type or function nodes.

With both switched off, the manifest's supporter sets and hops are exact.

:func:`vckg_profile_spec` sizes a graph like the production knowledge graph
(>=120K nodes, ~2.5M edges, mean degree ~21).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph_store import DEFAULT_SEMANTIC_TYPES, EDGES_HEADER, NODES_HEADER, PropertyGraph, graph_stats
from .grounding import CellSentence, write_cell_sentences
from .obo import OntologyTerm, write_obo

GENE_PREFIX = "SYN-G:"
CELLTYPE_PREFIX = "SYN-CL:"
FUNCTION_PREFIX = "SYN-F:"

FUNCTION_TYPES = (
    "BiologicalProcess",
    "MolecularFunction",
    "CellularComponent",
    "Pathway",
    "Anatomy",
    "Disease",
    "Phenotype",
)
GENE_FUNCTION_RELATION = {
    "BiologicalProcess": "PARTICIPATES_IN",
    "MolecularFunction": "ENABLES",
    "CellularComponent": "LOCATED_IN",
    "Pathway": "MEMBER_OF",
    "Anatomy": "EXPRESSED_IN",
    "Disease": "ASSOCIATED_WITH",
    "Phenotype": "HAS_PHENOTYPE",
}
CELLTYPE_FUNCTION_RELATION = {
    "BiologicalProcess": "CAPABLE_OF",
    "MolecularFunction": "HAS_FUNCTION",
    "CellularComponent": "HAS_COMPONENT",
    "Pathway": "INVOLVED_IN",
    "Anatomy": "PART_OF",
    "Disease": "IMPLICATED_IN",
    "Phenotype": "HAS_FEATURE",
}
MARKER_RELATION = "IS_MARKER_FOR"
ISA_RELATION = "IS_A"

_PROGRAM_GENES_PER_FUNCTION = 4


class InfeasibleSpecError(ValueError):
    pass


def gene_id(i: int) -> str:
    return f"{GENE_PREFIX}{i:06d}"


def gene_symbol(i: int) -> str:
    return f"SG{i:05d}"


def celltype_id(j: int) -> str:
    return f"{CELLTYPE_PREFIX}{j:07d}"


def celltype_name(j: int) -> str:
    return f"synthetic cell type {j}"


def function_id(f: int) -> str:
    return f"{FUNCTION_PREFIX}{f:07d}"


@dataclass(frozen=True)
class PlantedTarget:
    """A cell type (index) and its gene program; ``hops[i]`` is the hop of ``supporters[i]``."""

    celltype: int
    supporters: tuple[int, ...]
    hops: tuple[int, ...]


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_genes: int = 2000
    n_celltypes: int = 60
    n_function_nodes: int = 400
    marker_density: float = 0.0
    function_fanout: float = 0.0
    planted: tuple[PlantedTarget, ...] = ()
    noise_fraction: float = 0.0
    k: int = 2
    sentences_per_target: int = 5
    background_sentences: int = 0
    sentence_length: int = 50
    confounders: int = 2
    confounder_window: int = 10
    housekeeping_per_sentence: int = 0
    unmatched_per_sentence: int = 0
    extra_parent_prob: float = 0.1

    def validate(self) -> None:
        for name in ("marker_density", "extra_parent_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InfeasibleSpecError(f"{name} must be a probability")
        for name in (
            "n_genes", "n_celltypes", "n_function_nodes", "sentences_per_target",
            "background_sentences", "confounders", "housekeeping_per_sentence",
            "unmatched_per_sentence",
        ):
            if getattr(self, name) < 0:
                raise InfeasibleSpecError(f"{name} must be >= 0")
        if self.function_fanout < 0 or self.noise_fraction < 0:
            raise InfeasibleSpecError("function_fanout and noise_fraction must be >= 0")
        if self.n_celltypes < 1:
            raise InfeasibleSpecError("need at least one cell type")
        used_genes: set[int] = set()
        used_cts: set[int] = set()
        for p in self.planted:
            if not 0 <= p.celltype < self.n_celltypes:
                raise InfeasibleSpecError(f"planted cell type {p.celltype} out of range")
            if p.celltype in used_cts:
                raise InfeasibleSpecError(f"cell type {p.celltype} planted twice")
            used_cts.add(p.celltype)
            if len(p.supporters) != len(p.hops) or not p.supporters:
                raise InfeasibleSpecError("each planted target needs one hop per supporter")
            for g, h in zip(p.supporters, p.hops):
                if not 0 <= g < self.n_genes:
                    raise InfeasibleSpecError(f"supporter gene {g} out of range")
                if g in used_genes:
                    raise InfeasibleSpecError(f"gene {g} supports more than one planted target")
                used_genes.add(g)
                if h not in (1, 2):
                    raise InfeasibleSpecError(f"hop {h} unsupported; planted paths are 1 or 2 hops")
                if h > self.k:
                    raise InfeasibleSpecError(f"hop {h} exceeds traversal horizon k={self.k}")
        if self.program_function_count() > self.n_function_nodes:
            raise InfeasibleSpecError(
                f"planted 2-hop paths need {self.program_function_count()} function nodes, "
                f"only {self.n_function_nodes} available"
            )
        if self.planted and self.sentences_per_target:
            longest = max(len(p.supporters) for p in self.planted)
            if longest + self.confounders > self.sentence_length:
                raise InfeasibleSpecError("sentence too short for supporters plus confounders")
            if self.confounders and len(self.planted) < 2:
                raise InfeasibleSpecError("confounders need at least two planted targets")
            if self.confounders > self.confounder_window:
                raise InfeasibleSpecError("confounder_window smaller than confounders")
            if self.confounders and self.confounders > min(len(p.supporters) for p in self.planted):
                raise InfeasibleSpecError("confounders exceed the smallest program size")

    def program_function_count(self) -> int:
        return sum(
            math.ceil(sum(h == 2 for h in p.hops) / _PROGRAM_GENES_PER_FUNCTION)
            for p in self.planted
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["planted"] = [
            {"celltype": p.celltype, "supporters": list(p.supporters), "hops": list(p.hops)}
            for p in self.planted
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        d = dict(d)
        planted = tuple(
            PlantedTarget(int(p["celltype"]), tuple(p["supporters"]), tuple(p["hops"]))
            for p in d.pop("planted", ())
        )
        return cls(planted=planted, **d)


def planted_spec(
    seed: int = 0,
    n_targets: int = 20,
    supporters_per_target: int = 12,
    hop2_fraction: float = 1 / 3,
    **kwargs,
) -> SynthSpec:
    """A :class:`SynthSpec` with ``n_targets`` randomly placed, disjoint gene programs."""
    base = SynthSpec(seed=seed, **kwargs)
    rng = np.random.default_rng([seed, 1])
    if n_targets > base.n_celltypes or n_targets * supporters_per_target > base.n_genes:
        raise InfeasibleSpecError("not enough cell types or genes for the requested programs")
    cts = rng.choice(base.n_celltypes, size=n_targets, replace=False)
    genes = rng.permutation(base.n_genes)[: n_targets * supporters_per_target]
    n_hop2 = int(round(hop2_fraction * supporters_per_target))
    planted = []
    for i, ct in enumerate(sorted(cts.tolist())):
        sup = tuple(sorted(genes[i * supporters_per_target:(i + 1) * supporters_per_target].tolist()))
        hops = np.array([1] * (supporters_per_target - n_hop2) + [2] * n_hop2)
        rng.shuffle(hops)
        planted.append(PlantedTarget(int(ct), sup, tuple(int(h) for h in hops)))
    return SynthSpec(**{**asdict(base), "planted": tuple(planted)})


def vckg_profile_spec(seed: int = 0, n_sentences: int = 1000, n_planted: int = 20) -> SynthSpec:
    """Graph sized like the production graph: 240K nodes, ~2.5M edges, mean degree ~21.

    Node and edge totals are both met with mean degree 2E/N ~ 21 only at about
    twice the 120K node floor, so the function layer is sized to fill that gap.
    """
    n_genes, n_cts, n_funcs = 43_000, 2_500, 194_500
    base = planted_spec(
        seed=seed,
        n_targets=n_planted,
        supporters_per_target=12,
        n_genes=n_genes,
        n_celltypes=n_cts,
        n_function_nodes=n_funcs,
        marker_density=54_000 / (n_genes * n_cts),
        function_fanout=54.0,
        sentences_per_target=1,
        background_sentences=max(0, n_sentences - n_planted),
    )
    return base


@dataclass
class SynthData:
    """Everything :func:`generate` writes, held in memory."""

    spec: SynthSpec
    graph: PropertyGraph
    sentences: list[CellSentence]
    terms: list[OntologyTerm]
    manifest: dict = field(default_factory=dict)


class _Edges:
    def __init__(self):
        self.src: list[np.ndarray] = []
        self.rel: list[np.ndarray] = []
        self.dst: list[np.ndarray] = []
        self.relations: list[str] = []

    def add(self, src, relation, dst) -> None:
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if relation not in self.relations:
            self.relations.append(relation)
        code = self.relations.index(relation)
        self.src.append(src)
        self.dst.append(dst)
        self.rel.append(np.full(src.size, code, dtype=np.int32))

    def add_typed(self, src, dst, codes: np.ndarray, names: list[str]) -> None:
        # codes index into names; one relation per entry.
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        for name in names:
            if name not in self.relations:
                self.relations.append(name)
        lut = np.array([self.relations.index(n) for n in names], dtype=np.int32)
        self.src.append(src)
        self.dst.append(dst)
        self.rel.append(lut[codes])

    def arrays(self):
        if not self.src:
            z = np.zeros(0, dtype=np.int64)
            return z, z.astype(np.int32), z
        return np.concatenate(self.src), np.concatenate(self.rel), np.concatenate(self.dst)

    def count(self) -> int:
        return int(sum(a.size for a in self.src))


def _dedupe(src: np.ndarray, dst: np.ndarray, n: int, forbid: set[tuple[int, int]] = frozenset()):
    key = src * n + dst
    _, first = np.unique(key, return_index=True)
    first.sort()
    src, dst = src[first], dst[first]
    if forbid:
        keep = np.array([(s, d) not in forbid for s, d in zip(src.tolist(), dst.tolist())], dtype=bool)
        src, dst = src[keep], dst[keep]
    return src, dst


def build(spec: SynthSpec) -> SynthData:
    """Generate the graph, dataset, ontology and manifest in memory."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    G, C, F = spec.n_genes, spec.n_celltypes, spec.n_function_nodes
    # Global node numbering during generation: genes, then cell types, then functions.
    g_off, c_off, f_off = 0, G, G + C
    n_nodes = G + C + F

    n_reserved = spec.program_function_count()
    ftype_code = np.empty(F, dtype=np.int64)
    ftype_code[:n_reserved] = 0  # BiologicalProcess
    ftype_code[n_reserved:] = np.arange(F - n_reserved) % len(FUNCTION_TYPES)

    # ontology over cell types: parents always have a smaller index, so it is a DAG
    parents: list[tuple[int, ...]] = [()]
    for j in range(1, C):
        ps = {int(rng.integers(0, j))}
        if j > 1 and rng.random() < spec.extra_parent_prob:
            ps.add(int(rng.integers(0, j)))
        parents.append(tuple(sorted(ps)))

    edges = _Edges()
    isa_src = [j for j in range(C) for _ in parents[j]]
    isa_dst = [p for j in range(C) for p in parents[j]]
    edges.add(np.array(isa_src, dtype=np.int64) + c_off, ISA_RELATION, np.array(isa_dst, dtype=np.int64) + c_off)

    # planted programs
    planted_pairs: set[tuple[int, int]] = set()
    next_func = 0
    manifest_targets = []
    for p in spec.planted:
        hop1 = [g for g, h in zip(p.supporters, p.hops) if h == 1]
        hop2 = [g for g, h in zip(p.supporters, p.hops) if h == 2]
        if hop1:
            edges.add(np.array(hop1) + g_off, MARKER_RELATION, np.full(len(hop1), p.celltype + c_off))
        if hop2:
            n_pool = math.ceil(len(hop2) / _PROGRAM_GENES_PER_FUNCTION)
            pool = np.arange(next_func, next_func + n_pool)
            next_func += n_pool
            edges.add(
                np.array(hop2) + g_off,
                GENE_FUNCTION_RELATION["BiologicalProcess"],
                pool[np.arange(len(hop2)) % n_pool] + f_off,
            )
            edges.add(
                np.full(n_pool, p.celltype + c_off),
                CELLTYPE_FUNCTION_RELATION["BiologicalProcess"],
                pool + f_off,
            )
        for g in p.supporters:
            planted_pairs.add((g + g_off, p.celltype + c_off))
        manifest_targets.append(
            {
                "target": celltype_id(p.celltype),
                "name": celltype_name(p.celltype),
                "supporters": [
                    {"symbol": gene_symbol(g), "node_id": gene_id(g), "hop": h}
                    for g, h in sorted(zip(p.supporters, p.hops))
                ],
            }
        )
    structured = edges.count()

    # background: random markers and random function links, avoiding program function nodes
    background = 0
    if spec.marker_density > 0 and G and C:
        n_mark = int(rng.binomial(G * C, spec.marker_density))
        s = rng.integers(0, G, n_mark) + g_off
        d = rng.integers(0, C, n_mark) + c_off
        s, d = _dedupe(s, d, n_nodes, planted_pairs)
        edges.add(s, MARKER_RELATION, d)
        background += s.size
    free_funcs = F - n_reserved
    if spec.function_fanout > 0 and free_funcs > 0:
        for count, offset in ((G, g_off), (C, c_off)):
            deg = rng.poisson(spec.function_fanout, count)
            s = np.repeat(np.arange(count, dtype=np.int64), deg) + offset
            f = rng.integers(n_reserved, F, s.size)
            s, d = _dedupe(s, f + f_off, n_nodes)
            ftypes = ftype_code[d - f_off]
            table = GENE_FUNCTION_RELATION if offset == g_off else CELLTYPE_FUNCTION_RELATION
            edges.add_typed(s, d, ftypes, [table[t] for t in FUNCTION_TYPES])
            background += s.size

    # noise: random Gene -> (CellType | function) edges
    noise = 0
    if spec.noise_fraction > 0 and G:
        n_noise = int(round(spec.noise_fraction * edges.count()))
        s = rng.integers(0, G, n_noise) + g_off
        d = rng.integers(0, C + F, n_noise) + c_off
        s, d = _dedupe(s, d, n_nodes, planted_pairs)
        is_ct = d < f_off
        if is_ct.any():
            edges.add(s[is_ct], MARKER_RELATION, d[is_ct])
        if (~is_ct).any():
            fs, fd = s[~is_ct], d[~is_ct]
            edges.add_typed(fs, fd, ftype_code[fd - f_off], [GENE_FUNCTION_RELATION[t] for t in FUNCTION_TYPES])
        noise = s.size

    graph = _assemble_graph(spec, edges, ftype_code, parents)
    terms = [
        OntologyTerm(
            celltype_id(j),
            celltype_name(j),
            frozenset(celltype_id(p) for p in parents[j]),
            frozenset({f"syn ct {j}"}),
        )
        for j in range(C)
    ]
    sentences, sentence_records = _sentences(spec, rng)
    stats = graph_stats(graph)
    manifest = {
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "exact_supporters": background == 0 and noise == 0,
        "edge_counts": {"structured": structured, "background": background, "noise": noise},
        "stats": stats.to_dict(),
        "planted": manifest_targets,
        "sentences": sentence_records,
    }
    return SynthData(spec, graph, sentences, terms, manifest)


def _assemble_graph(spec: SynthSpec, edges: _Edges, ftype_code: np.ndarray, parents) -> PropertyGraph:
    G, C, F = spec.n_genes, spec.n_celltypes, spec.n_function_nodes
    ids = (
        [gene_id(i) for i in range(G)]
        + [celltype_id(j) for j in range(C)]
        + [function_id(f) for f in range(F)]
    )
    names = (
        [gene_symbol(i) for i in range(G)]
        + [celltype_name(j) for j in range(C)]
        + [f"synthetic {FUNCTION_TYPES[t].lower()} {f}" for f, t in enumerate(ftype_code.tolist())]
    )
    synonyms = (
        [frozenset({f"SGA{i:05d}"}) for i in range(G)]
        + [frozenset({f"syn ct {j}"}) for j in range(C)]
        + [frozenset()] * F
    )
    types = ["Gene", "CellType", *FUNCTION_TYPES]
    code_of = {t: DEFAULT_SEMANTIC_TYPES.index(t) for t in types}
    fcodes = np.array([code_of[t] for t in FUNCTION_TYPES], dtype=np.int16)
    node_type = np.concatenate(
        [
            np.full(G, code_of["Gene"], dtype=np.int16),
            np.full(C, code_of["CellType"], dtype=np.int16),
            fcodes[ftype_code] if F else np.zeros(0, dtype=np.int16),
        ]
    )
    order = sorted(range(len(ids)), key=ids.__getitem__)
    new_pos = np.empty(len(ids), dtype=np.int64)
    new_pos[order] = np.arange(len(ids))
    src, rel, dst = edges.arrays()
    relations = sorted(edges.relations)
    remap = np.array([relations.index(r) for r in edges.relations], dtype=np.int32)
    return PropertyGraph(
        node_ids=[ids[i] for i in order],
        node_type=node_type[order],
        names=[names[i] for i in order],
        synonyms=[synonyms[i] for i in order],
        edge_src=new_pos[src],
        edge_rel=remap[rel] if rel.size else rel,
        edge_dst=new_pos[dst],
        relations=relations,
    )


def _sentences(spec: SynthSpec, rng: np.random.Generator):
    program_genes = {g for p in spec.planted for g in p.supporters}
    free = np.array([g for g in range(spec.n_genes) if g not in program_genes], dtype=np.int64)
    L = spec.sentence_length
    sentences: list[CellSentence] = []
    records = []
    hk_pool = [f"RPL{i}" for i in range(3, 40)] + [f"MT-CO{i}" for i in range(1, 4)]

    for pi, p in enumerate(spec.planted):
        others = [q for qi, q in enumerate(spec.planted) if qi != pi]
        for s in range(spec.sentences_per_target):
            slots: list[int | str | None] = [None] * L
            conf: list[int] = []
            if spec.confounders and others:
                q = others[int(rng.integers(0, len(others)))]
                conf = rng.choice(np.array(q.supporters), size=spec.confounders, replace=False).tolist()
                pos = rng.choice(spec.confounder_window, size=spec.confounders, replace=False)
                for g, i in zip(conf, pos.tolist()):
                    slots[i] = g
            open_slots = [i for i in range(L) if slots[i] is None]
            order = rng.permutation(np.array(p.supporters)).tolist()
            spread = np.linspace(0, len(open_slots) - 1, len(order)).round().astype(int)
            for g, i in zip(order, spread.tolist()):
                slots[open_slots[i]] = g
            _fill(slots, free, rng, spec, hk_pool)
            symbols = tuple(x if isinstance(x, str) else gene_symbol(x) for x in slots)
            cid = f"syn-cell-{pi:04d}-{s:03d}"
            sentences.append(CellSentence(cid, symbols, celltype_id(p.celltype)))
            records.append(
                {
                    "cell_id": cid,
                    "target": celltype_id(p.celltype),
                    "supporters": [gene_symbol(g) for g in order],
                    "confounders": [gene_symbol(g) for g in conf],
                }
            )

    for s in range(spec.background_sentences):
        slots = [None] * L
        _fill(slots, np.arange(spec.n_genes, dtype=np.int64), rng, spec, hk_pool)
        symbols = tuple(x if isinstance(x, str) else gene_symbol(x) for x in slots)
        label = celltype_id(int(rng.integers(0, spec.n_celltypes)))
        cid = f"syn-bg-{s:06d}"
        sentences.append(CellSentence(cid, symbols, label))
        records.append({"cell_id": cid, "target": None, "supporters": [], "confounders": []})
    return sentences, records


def _fill(slots, pool: np.ndarray, rng: np.random.Generator, spec: SynthSpec, hk_pool) -> None:
    """Fill empty slots: housekeeping and unmatched symbols first, then random pool genes."""
    empty = [i for i, x in enumerate(slots) if x is None]
    n_special = min(len(empty), spec.housekeeping_per_sentence + spec.unmatched_per_sentence)
    special = rng.choice(np.array(empty), size=n_special, replace=False).tolist() if n_special else []
    for j, i in enumerate(special):
        if j < spec.housekeeping_per_sentence:
            slots[i] = hk_pool[int(rng.integers(0, len(hk_pool)))] + f"-{j}"
        else:
            slots[i] = f"NOTAGENE{int(rng.integers(0, 10**6)):06d}"
    empty = [i for i, x in enumerate(slots) if x is None]
    taken = {x for x in slots if isinstance(x, int)}
    avail = pool[~np.isin(pool, list(taken))] if taken else pool
    if len(avail) < len(empty):
        raise InfeasibleSpecError("not enough free genes to fill sentences")
    picks = rng.choice(avail, size=len(empty), replace=False).tolist()
    for i, g in zip(empty, picks):
        slots[i] = g


@dataclass(frozen=True)
class SynthArtifacts:
    nodes: Path
    edges: Path
    dataset: Path
    ontology: Path
    manifest: Path


def write(data: SynthData, out_dir: str | Path) -> SynthArtifacts:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = SynthArtifacts(
        out / "nodes.tsv", out / "edges.tsv", out / "dataset.jsonl", out / "ontology.obo",
        out / "manifest.json",
    )
    g = data.graph
    with open(paths.nodes, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(NODES_HEADER) + "\n")
        types = g.semantic_types
        tcodes = g.node_type.tolist()
        fh.writelines(
            f"{nid}\t{types[t]}\t{name}\t{'|'.join(sorted(syn))}\n"
            for nid, t, name, syn in zip(g.node_ids, tcodes, g.names, g.synonyms)
        )
    with open(paths.edges, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(EDGES_HEADER) + "\n")
        ids, rels = g.node_ids, g.relations
        chunk = 200_000
        for lo in range(0, g.edge_count, chunk):
            s = g.edge_src[lo:lo + chunk].tolist()
            r = g.edge_rel[lo:lo + chunk].tolist()
            d = g.edge_dst[lo:lo + chunk].tolist()
            fh.write("".join(f"{ids[a]}\t{rels[b]}\t{ids[c]}\n" for a, b, c in zip(s, r, d)))
    write_cell_sentences(data.sentences, paths.dataset)
    write_obo(data.terms, paths.ontology)
    with open(paths.manifest, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def generate(spec: SynthSpec, out_dir: str | Path) -> SynthArtifacts:
    """Generate and write ``nodes.tsv``, ``edges.tsv``, ``dataset.jsonl``, ``ontology.obo``, ``manifest.json``."""
    return write(build(spec), out_dir)
