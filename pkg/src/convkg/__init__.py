"""Convergence-centric retrieval over typed knowledge graphs.

Genes from a ranked cell sentence are grounded to graph nodes, traversed
together up to ``k`` hops, and cell-type nodes that many informative genes
converge on are scored and handed to a single LLM call as evidence.
"""

from .annotate import (
    AnnotateConfig,
    AnnotationResult,
    EvidenceContext,
    annotate,
    annotate_batch,
    assemble_prompt,
    build_evidence,
    retrieve,
)
from .evaluation import MetricsReport, ancestor_match, evaluate, exact_match
from .graph_store import (
    DEFAULT_SEMANTIC_TYPES,
    GraphLoadError,
    GraphNode,
    PropertyGraph,
    graph_stats,
    load_graph,
    neighbors,
)
from .grounding import (
    CellSentence,
    FilterConfig,
    GroundedGeneSet,
    ground,
    parse_cell_sentences,
)
from .llm import HttpChatClient, LlmRequest, LlmResponse, MockChatClient, TransportError
from .obo import OboParseError, OntologyDag, on_same_path, parse_obo, resolve_label
from .scoring import (
    ScoredCandidate,
    ScoringConfig,
    idf_weight,
    rank_weight,
    score_candidates,
    select_top_k,
)
from .traversal import SupportTable, TraversalConfig, multi_source_traverse, reachable_target_count

__version__ = "0.1.0"
