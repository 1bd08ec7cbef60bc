"""Minimal OBO reader for the Cell Ontology ``is_a`` hierarchy.

Only ``[Term]`` stanzas are read, and within them only the ``id``, ``name``,
``is_a`` and ``synonym`` tags. Everything else (typedefs, relationships,
xrefs, obsolete markers) is skipped.
"""

from __future__ import annotations

import logging
import re
import string
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .graph_store import GraphNode

logger = logging.getLogger(__name__)

_SYNONYM_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"')
_WS_RE = re.compile(r"\s+")
_TRAILING_PUNCT = string.punctuation.replace(")", "").replace("]", "")


class OboParseError(ValueError):
    pass


@dataclass(frozen=True)
class OntologyTerm:
    id: str
    name: str
    parents: frozenset[str] = frozenset()
    synonyms: frozenset[str] = frozenset()


def normalize_label(text: str) -> str:
    """Lowercase, trim, collapse internal whitespace, strip trailing punctuation."""
    text = _WS_RE.sub(" ", text.strip().lower())
    return text.rstrip(_TRAILING_PUNCT).rstrip()


@dataclass
class OntologyDag:
    """Cell-type DAG with a precomputed transitive ``is_a`` closure.

    ``ancestor_closure[t]`` never contains ``t`` itself.
    """

    terms: Mapping[str, OntologyTerm]
    ancestor_closure: Mapping[str, frozenset[str]] = field(init=False)

    def __post_init__(self):
        self.terms = dict(self.terms)
        self.ancestor_closure = _closure(self.terms)
        self._label_index = self._build_label_index()

    def __contains__(self, term_id: object) -> bool:
        return term_id in self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def _check(self, term_id: str) -> None:
        if term_id not in self.terms:
            raise KeyError(f"unknown term id {term_id!r}")

    def ancestors(self, term_id: str) -> frozenset[str]:
        self._check(term_id)
        return self.ancestor_closure[term_id]

    def descendants(self, term_id: str) -> frozenset[str]:
        self._check(term_id)
        return frozenset(t for t, anc in self.ancestor_closure.items() if term_id in anc)

    def name(self, term_id: str) -> str:
        self._check(term_id)
        return self.terms[term_id].name

    def on_same_path(self, a: str, b: str) -> bool:
        """True iff ``a`` and ``b`` are equal or one is an ancestor of the other."""
        self._check(a)
        self._check(b)
        return a == b or a in self.ancestor_closure[b] or b in self.ancestor_closure[a]

    def _build_label_index(self):
        by_name: dict[str, list[str]] = {}
        by_syn: dict[str, list[str]] = {}
        by_id = {normalize_label(t): t for t in self.terms}
        for term in self.terms.values():
            by_name.setdefault(normalize_label(term.name), []).append(term.id)
            for syn in term.synonyms:
                by_syn.setdefault(normalize_label(syn), []).append(term.id)

        def pick(index: dict[str, list[str]], kind: str) -> dict[str, str]:
            out = {}
            for key, ids in index.items():
                ids = sorted(set(ids))
                if len(ids) > 1:
                    logger.info("%s collision for %r: %s; using %s", kind, key, ids, ids[0])
                out[key] = ids[0]
            return out

        return by_id, pick(by_name, "name"), pick(by_syn, "synonym")

    def resolve_label(self, text: str) -> str | None:
        """Map free text (an id, a name or a synonym) to a term id, or ``None``."""
        if text in self.terms:
            return text
        key = normalize_label(text)
        if not key:
            return None
        for index in self._label_index:
            if key in index:
                return index[key]
        return None

    def to_graph_records(self, semantic_type: str = "CellType", relation: str = "IS_A"):
        """Nodes and ``is_a`` edges in graph-store form, sharing the ontology ids."""
        nodes = [
            GraphNode(t.id, semantic_type, t.name, t.synonyms)
            for t in sorted(self.terms.values(), key=lambda t: t.id)
        ]
        edges = [
            (t.id, relation, p)
            for t in sorted(self.terms.values(), key=lambda t: t.id)
            for p in sorted(t.parents)
        ]
        return nodes, edges


def _closure(terms: Mapping[str, OntologyTerm]) -> dict[str, frozenset[str]]:
    # Kahn's algorithm from the roots down; anything left over sits on a cycle.
    children: dict[str, list[str]] = {t: [] for t in terms}
    pending = {t: len(term.parents) for t, term in terms.items()}
    for t, term in terms.items():
        for p in term.parents:
            children[p].append(t)
    ready = sorted(t for t, n in pending.items() if n == 0)
    closure: dict[str, frozenset[str]] = {}
    while ready:
        t = ready.pop()
        anc: set[str] = set()
        for p in terms[t].parents:
            anc.add(p)
            anc |= closure[p]
        closure[t] = frozenset(anc)
        for c in children[t]:
            pending[c] -= 1
            if pending[c] == 0:
                ready.append(c)
    if len(closure) != len(terms):
        stuck = sorted(set(terms) - set(closure))
        raise OboParseError(f"is_a cycle among terms: {', '.join(stuck[:10])}")
    return closure


def _strip_value(value: str) -> str:
    # "CL:0000000 ! cell" -> "CL:0000000"; trailing {qualifiers} dropped.
    value = value.split(" !", 1)[0]
    value = re.sub(r"\s*\{.*\}\s*$", "", value)
    return value.strip()


def parse_obo_lines(lines: Iterable[str], source: str = "<obo>") -> OntologyDag:
    terms: dict[str, OntologyTerm] = {}
    stanza: dict | None = None
    stanza_line = 0

    def flush():
        if stanza is None:
            return
        where = f"{source}:{stanza_line}"
        if not stanza["id"]:
            raise OboParseError(f"{where}: [Term] stanza without id")
        if len(stanza["id"]) > 1:
            raise OboParseError(f"{where}: [Term] stanza with multiple ids {stanza['id']}")
        tid = stanza["id"][0]
        if not stanza["name"]:
            raise OboParseError(f"{where}: term {tid!r} has no name")
        if tid in terms:
            raise OboParseError(f"{where}: duplicate term id {tid!r}")
        terms[tid] = OntologyTerm(
            tid, stanza["name"][0], frozenset(stanza["is_a"]), frozenset(stanza["synonym"])
        )

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("!"):
            continue
        if line.startswith("["):
            flush()
            if not line.endswith("]"):
                raise OboParseError(f"{source}:{lineno}: malformed stanza header {line!r}")
            stanza = {"id": [], "name": [], "is_a": [], "synonym": []} if line == "[Term]" else None
            stanza_line = lineno
            continue
        if stanza is None:
            continue
        tag, sep, value = line.partition(":")
        if not sep:
            raise OboParseError(f"{source}:{lineno}: malformed tag line {line!r}")
        tag, value = tag.strip(), value.strip()
        if tag == "synonym":
            m = _SYNONYM_RE.match(value)
            if not m:
                raise OboParseError(f"{source}:{lineno}: malformed synonym {value!r}")
            stanza["synonym"].append(m.group(1).replace('\\"', '"'))
        elif tag == "name":
            stanza["name"].append(value)
        elif tag in ("id", "is_a"):
            stanza[tag].append(_strip_value(value))
    flush()

    for term in terms.values():
        for p in term.parents:
            if p not in terms:
                raise OboParseError(f"{source}: term {term.id!r} is_a unknown term {p!r}")
            if p == term.id:
                raise OboParseError(f"{source}: is_a cycle: {term.id!r} is_a itself")
    return OntologyDag(terms)


def parse_obo(path: str | Path) -> OntologyDag:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_obo_lines(fh, source=path.name)


def on_same_path(dag: OntologyDag, a: str, b: str) -> bool:
    return dag.on_same_path(a, b)


def resolve_label(dag: OntologyDag, text: str) -> str | None:
    return dag.resolve_label(text)


def write_obo(terms: Iterable[OntologyTerm], path: str | Path, ontology: str = "syn-cl") -> None:
    """Write terms as a minimal OBO file that :func:`parse_obo` reads back."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("format-version: 1.2\n")
        fh.write(f"ontology: {ontology}\n")
        for t in sorted(terms, key=lambda t: t.id):
            fh.write(f"\n[Term]\nid: {t.id}\nname: {t.name}\n")
            for syn in sorted(t.synonyms):
                escaped = syn.replace('"', '\\"')
                fh.write(f'synonym: "{escaped}" EXACT []\n')
            for p in sorted(t.parents):
                fh.write(f"is_a: {p}\n")
