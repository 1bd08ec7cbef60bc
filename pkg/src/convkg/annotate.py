"""Evidence assembly and single-call LLM annotation.

Retrieval (ground, traverse, score, select, build evidence) never touches the
LLM client. The client is called exactly once per sample, after the prompt is
assembled; transport retries are counted separately from ``llm_calls``.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .graph_store import PropertyGraph
from .grounding import CellSentence, FilterConfig, GroundedGeneSet, ground
from .llm import ChatClient, LlmRequest, TransportError
from .obo import OntologyDag
from .scoring import ScoredCandidate, ScoringConfig, Supporter, score_candidates, select_top_k
from .traversal import (
    SupportTable,
    TraversalConfig,
    edge_between,
    multi_source_traverse,
    shortest_alternating_path,
)

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE_VERSION = "convergence-v1"

PROMPT_TEMPLATES = {
    "convergence-v1": {
        "system": (
            "You are an expert in single-cell biology. You annotate cells with "
            "Cell Ontology cell types using ranked marker genes and knowledge-graph evidence."
        ),
        "genes": "Ranked genes (most discriminative first): {genes}",
        "evidence_header": (
            "Knowledge-graph convergence evidence. Each candidate cell type is "
            "reached by the listed genes within the given number of hops:"
        ),
        "no_evidence": "No knowledge-graph evidence was found for these genes.",
        "label_space": "Candidate cell types: {names}",
        "instruction": (
            "Answer with a single Cell Ontology cell type name and nothing else."
        ),
    },
}

Observer = Callable[[str, str], None]


@dataclass(frozen=True)
class EvidencePath:
    symbol: str
    target: str
    nodes: tuple[str, ...]
    rendered: str


@dataclass(frozen=True)
class EvidenceEntry:
    target: str
    name: str
    score: float
    supporters: dict[int, tuple[Supporter, ...]]


@dataclass(frozen=True)
class EvidenceContext:
    entries: tuple[EvidenceEntry, ...] = ()
    include_paths: bool = False
    paths: tuple[EvidencePath, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)

    def paths_for(self, target: str) -> list[EvidencePath]:
        return [p for p in self.paths if p.target == target]


@dataclass(frozen=True)
class AnnotateConfig:
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    include_paths: bool = False
    label_space_hint: bool = False
    template_version: str = PROMPT_TEMPLATE_VERSION
    max_retries: int = 2
    max_in_flight: int = 4
    dry_run: bool = False

    def __post_init__(self):
        if self.template_version not in PROMPT_TEMPLATES:
            raise ValueError(f"unknown prompt template {self.template_version!r}")
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise ValueError("max_retries must be >= 0 and max_in_flight >= 1")


@dataclass(frozen=True)
class Retrieval:
    grounded: GroundedGeneSet
    table: SupportTable
    ranked: list[ScoredCandidate]
    topk: list[ScoredCandidate]


@dataclass
class AnnotationResult:
    cell_id: str
    predicted_term: str | None
    raw_answer: str
    llm_calls: int
    evidence_count: int
    grounded_count: int
    gold: str | None = None
    retries: int = 0
    warnings: list[str] = field(default_factory=list)
    error: str | None = None
    request: LlmRequest | None = field(default=None, repr=False, compare=False)

    def to_record(self) -> dict:
        rec = {
            "cell_id": self.cell_id,
            "predicted": self.predicted_term,
            "gold": self.gold,
            "llm_calls": self.llm_calls,
            "evidence_count": self.evidence_count,
            "grounded_count": self.grounded_count,
            "raw_answer": self.raw_answer,
            "retries": self.retries,
        }
        if self.warnings:
            rec["warnings"] = list(self.warnings)
        if self.error:
            rec["error"] = self.error
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> AnnotationResult:
        return cls(
            cell_id=rec["cell_id"],
            predicted_term=rec.get("predicted"),
            raw_answer=rec.get("raw_answer", ""),
            llm_calls=int(rec.get("llm_calls", 0)),
            evidence_count=int(rec.get("evidence_count", 0)),
            grounded_count=int(rec.get("grounded_count", 0)),
            gold=rec.get("gold"),
            retries=int(rec.get("retries", 0)),
            warnings=list(rec.get("warnings", [])),
            error=rec.get("error"),
        )


def retrieve(
    sentence: CellSentence,
    graph: PropertyGraph,
    filter: FilterConfig = FilterConfig(),
    traversal: TraversalConfig = TraversalConfig(),
    scoring: ScoringConfig = ScoringConfig(),
    observer: Observer | None = None,
) -> Retrieval:
    """Ground, traverse, score and select. No LLM involvement."""
    notify = observer or (lambda cell, stage: None)
    notify(sentence.cell_id, "ground")
    grounded = ground(sentence, graph, filter)
    notify(sentence.cell_id, "traverse")
    table = multi_source_traverse(graph, grounded, traversal)
    notify(sentence.cell_id, "score")
    ranked = score_candidates(table, grounded, scoring)
    notify(sentence.cell_id, "select")
    topk = select_top_k(ranked, scoring.K)
    return Retrieval(grounded, table, ranked, topk)


def render_path(graph: PropertyGraph, nodes: Sequence[str]) -> str:
    """``A -REL-> B <-REL- C`` using node names and the stored edge directions."""
    parts = [graph.names[graph.index_of(nodes[0])]]
    for u, v in zip(nodes, nodes[1:]):
        relation, direction = edge_between(graph, u, v)
        arrow = f"-{relation}->" if direction == "out" else f"<-{relation}-"
        parts.append(arrow)
        parts.append(graph.names[graph.index_of(v)])
    return " ".join(parts)


def build_evidence(
    topk: Sequence[ScoredCandidate],
    graph: PropertyGraph,
    grounded: GroundedGeneSet,
    include_paths: bool = False,
    enforce_type_alternation: bool = True,
) -> EvidenceContext:
    """Turn the selected candidates into prompt evidence, optionally with one path per supporter."""
    node_of = {g.rank: g.node_id for g in grounded}
    entries = []
    paths = []
    for cand in topk:
        name = graph.names[graph.index_of(cand.target)]
        entries.append(EvidenceEntry(cand.target, name, cand.score, cand.supporters))
        if not include_paths:
            continue
        for h, sups in sorted(cand.supporters.items()):
            for sup in sups:
                nodes = shortest_alternating_path(
                    graph, node_of[sup.rank], cand.target, h, enforce_type_alternation
                )
                if nodes is None or len(nodes) != h + 1:
                    raise RuntimeError(
                        f"no {h}-hop path from {sup.symbol} to {cand.target}; table and graph disagree"
                    )
                paths.append(
                    EvidencePath(sup.symbol, cand.target, tuple(nodes), render_path(graph, nodes))
                )
    return EvidenceContext(tuple(entries), include_paths, tuple(paths))


def _fmt_supporters(sups: Sequence[Supporter]) -> str:
    return ", ".join(f"{s.symbol} (rank {s.rank + 1}, weight {s.weight:.4f})" for s in sups)


def assemble_prompt(
    context: EvidenceContext,
    sentence: CellSentence,
    label_space_hint: Sequence[str] | None = None,
    config: AnnotateConfig = AnnotateConfig(),
) -> LlmRequest:
    """Deterministic chat request for one cell."""
    tpl = PROMPT_TEMPLATES[config.template_version]
    lines = [tpl["genes"].format(genes=", ".join(sentence.gene_symbols)), ""]
    if context.entries:
        lines.append(tpl["evidence_header"])
        for i, entry in enumerate(context.entries, start=1):
            lines.append(f"[Evidence {i}] {entry.name} ({entry.target}), score {entry.score:.4f}")
            for h, sups in sorted(entry.supporters.items()):
                lines.append(f"  {h}-hop supporters: {_fmt_supporters(sups)}")
            for p in context.paths_for(entry.target):
                lines.append(f"  path: {p.rendered}")
    else:
        lines.append(tpl["no_evidence"])
    if label_space_hint:
        lines += ["", tpl["label_space"].format(names="; ".join(label_space_hint))]
    lines += ["", tpl["instruction"]]
    return LlmRequest(
        model=config.model,
        system_prompt=tpl["system"],
        user_prompt="\n".join(lines),
        temperature=config.temperature,
        metadata={
            "cell_id": sentence.cell_id,
            "template": config.template_version,
            "candidate_names": tuple(e.name for e in context.entries),
        },
    )


def resolve_answer(dag: OntologyDag, text: str) -> str | None:
    """Best-effort mapping of a free-text answer onto an ontology term."""
    text = text.strip().strip("`*\"'")
    if not text:
        return None
    candidates = [text]
    first = text.splitlines()[0].strip()
    candidates.append(first)
    if ":" in first:
        candidates.append(first.rsplit(":", 1)[-1])
    for c in candidates:
        term = dag.resolve_label(c.strip().strip("`*\"'"))
        if term is not None:
            return term
    return None


def annotate(
    sentence: CellSentence,
    graph: PropertyGraph,
    dag: OntologyDag,
    client: ChatClient | None,
    filter: FilterConfig = FilterConfig(),
    traversal: TraversalConfig = TraversalConfig(),
    scoring: ScoringConfig = ScoringConfig(),
    config: AnnotateConfig = AnnotateConfig(),
    observer: Observer | None = None,
) -> AnnotationResult:
    """Full pipeline for one cell: retrieval, one prompt, one LLM call, label resolution.

    Raises:
        TransportError: the endpoint failed on every attempt.
    """
    notify = observer or (lambda cell, stage: None)
    r = retrieve(sentence, graph, filter, traversal, scoring, observer)
    notify(sentence.cell_id, "evidence")
    context = build_evidence(
        r.topk, graph, r.grounded, config.include_paths, traversal.enforce_type_alternation
    )
    hint = None
    if config.label_space_hint:
        hint = sorted({dag.name(t) for t in dag.terms})
    request = assemble_prompt(context, sentence, hint, config)
    notify(sentence.cell_id, "prompt")

    warnings = []
    if not r.grounded.genes:
        warnings.append("no_grounded_genes")
        logger.warning("cell %s: no genes grounded; prompting without evidence", sentence.cell_id)

    result = AnnotationResult(
        cell_id=sentence.cell_id,
        predicted_term=None,
        raw_answer="",
        llm_calls=0,
        evidence_count=len(context),
        grounded_count=len(r.grounded),
        gold=sentence.gold_label,
        warnings=warnings,
        request=request,
    )
    if config.dry_run or client is None:
        return result

    retries = 0
    while True:
        try:
            response = client.complete(request)
            break
        except TransportError:
            if retries >= config.max_retries:
                result.retries = retries
                raise
            retries += 1
            logger.info("cell %s: transport error, retry %d", sentence.cell_id, retries)
    notify(sentence.cell_id, "resolve")
    result.llm_calls = 1
    result.retries = retries
    result.raw_answer = response.text
    result.predicted_term = resolve_answer(dag, response.text)
    return result


def annotate_batch(
    sentences: Sequence[CellSentence],
    graph: PropertyGraph,
    dag: OntologyDag,
    client: ChatClient | None,
    filter: FilterConfig = FilterConfig(),
    traversal: TraversalConfig = TraversalConfig(),
    scoring: ScoringConfig = ScoringConfig(),
    config: AnnotateConfig = AnnotateConfig(),
    observer: Observer | None = None,
) -> list[AnnotationResult]:
    """Annotate many cells with at most ``config.max_in_flight`` concurrent requests.

    Transport failures are recorded on the affected result (``error`` set,
    ``llm_calls`` 0) instead of aborting the batch. Output order follows input.
    """

    def one(sentence: CellSentence) -> AnnotationResult:
        try:
            return annotate(sentence, graph, dag, client, filter, traversal, scoring, config, observer)
        except TransportError as exc:
            return AnnotationResult(
                cell_id=sentence.cell_id,
                predicted_term=None,
                raw_answer="",
                llm_calls=0,
                evidence_count=0,
                grounded_count=0,
                gold=sentence.gold_label,
                retries=config.max_retries,
                error=f"transport: {exc}",
            )

    if config.max_in_flight == 1 or len(sentences) <= 1:
        return [one(s) for s in sentences]
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        return list(pool.map(one, sentences))
