"""Exact / ancestor-match accuracy and call/evidence accounting over a dataset."""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

from .annotate import AnnotationResult
from .grounding import CellSentence
from .obo import OntologyDag


class EvaluationError(ValueError):
    pass


@dataclass
class MetricsReport:
    n_samples: int
    exact_pct: float
    ancestor_pct: float
    avg_calls: float
    avg_evidence: float
    per_class_confusion: dict[str, dict[str, int]] = field(default_factory=dict)
    unresolved_predictions: int = 0

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "exact_pct": self.exact_pct,
            "ancestor_pct": self.ancestor_pct,
            "avg_calls": self.avg_calls,
            "avg_evidence": self.avg_evidence,
            "unresolved_predictions": self.unresolved_predictions,
            "per_class_confusion": self.per_class_confusion,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self, method: str = "convergence") -> str:
        header = ("Method", "Exact", "Anc.", "Calls", "Evid.")
        row = (
            method,
            f"{self.exact_pct:.2f}",
            f"{self.ancestor_pct:.2f}",
            f"{self.avg_calls:.1f}",
            f"{self.avg_evidence:.1f}",
        )
        widths = [max(len(a), len(b)) for a, b in zip(header, row)]

        def fmt(cells):
            first = cells[0].ljust(widths[0])
            return "  ".join([first] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])])

        return "\n".join([fmt(header), "  ".join("-" * w for w in widths), fmt(row)])


def _check_gold(gold: str, dag: OntologyDag) -> None:
    if gold not in dag:
        raise EvaluationError(f"gold label {gold!r} is not an ontology term")


def exact_match(pred: str | None, gold: str, dag: OntologyDag | None = None) -> bool:
    if dag is not None:
        _check_gold(gold, dag)
    return pred is not None and pred == gold


def ancestor_match(pred: str | None, gold: str, dag: OntologyDag) -> bool:
    """Prediction equals the gold label or lies above/below it in the is_a DAG."""
    _check_gold(gold, dag)
    if pred is None or pred not in dag:
        return False
    return dag.on_same_path(pred, gold)


def evaluate(
    results: Sequence[AnnotationResult],
    dataset: Sequence[CellSentence],
    dag: OntologyDag,
) -> MetricsReport:
    """Aggregate metrics; unresolved predictions count as misses for both accuracies."""
    by_cell = {}
    for r in results:
        if r.cell_id in by_cell:
            raise EvaluationError(f"duplicate result for cell {r.cell_id!r}")
        by_cell[r.cell_id] = r
    cells = [s.cell_id for s in dataset]
    if len(set(cells)) != len(cells):
        raise EvaluationError("dataset has duplicate cell ids")
    if set(cells) != set(by_cell):
        missing = sorted(set(cells) - set(by_cell))[:5]
        extra = sorted(set(by_cell) - set(cells))[:5]
        raise EvaluationError(f"results do not match dataset (missing {missing}, unexpected {extra})")

    n = len(dataset)
    exact = anc = unresolved = calls = evidence = 0
    confusion: dict[str, Counter] = {}
    for s in dataset:
        if s.gold_label is None:
            raise EvaluationError(f"cell {s.cell_id!r} has no gold label")
        gold = dag.resolve_label(s.gold_label)
        if gold is None:
            raise EvaluationError(f"cell {s.cell_id!r}: gold label {s.gold_label!r} not in ontology")
        r = by_cell[s.cell_id]
        pred = r.predicted_term if r.predicted_term in dag else None
        if pred is None:
            unresolved += 1
        exact += exact_match(pred, gold)
        anc += ancestor_match(pred, gold, dag)
        calls += r.llm_calls
        evidence += r.evidence_count
        confusion.setdefault(gold, Counter())[pred if pred is not None else "<unresolved>"] += 1

    return MetricsReport(
        n_samples=n,
        exact_pct=round(100.0 * exact / n, 2) if n else 0.0,
        ancestor_pct=round(100.0 * anc / n, 2) if n else 0.0,
        avg_calls=calls / n if n else 0.0,
        avg_evidence=evidence / n if n else 0.0,
        per_class_confusion={g: dict(sorted(c.items())) for g, c in sorted(confusion.items())},
        unresolved_predictions=unresolved,
    )
