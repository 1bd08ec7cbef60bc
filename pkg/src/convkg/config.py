"""Run configuration: a TOML file plus command-line overrides (flags win).

Example::

    out = "runs/lung"

    [paths]
    graph_nodes = "data/nodes.tsv"
    graph_edges = "data/edges.tsv"
    obo = "data/cl.obo"
    dataset = "data/lung.jsonl"

    [traversal]
    k = 2
    target_type = "CellType"
    enforce_type_alternation = true

    [scoring]
    gamma = 0.5          # or: alpha = [1.0, 0.5]
    top_k = 10

    [grounding]
    housekeeping_prefixes = ["RPL", "MT-"]

    [annotate]
    base_url = "http://localhost:8000/v1"
    model = "gpt-4o-mini"
    temperature = 0.0
    include_paths = false
    max_in_flight = 4
    max_retries = 2

The LLM token is never read from this file; see ``annotate.token_env``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .annotate import AnnotateConfig
from .grounding import DEFAULT_HOUSEKEEPING_PREFIXES, FilterConfig
from .llm import DEFAULT_TOKEN_ENV
from .scoring import ScoringConfig
from .traversal import TraversalConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    graph_nodes: Path | None = None
    graph_edges: Path | None = None
    obo: Path | None = None
    dataset: Path | None = None


@dataclass(frozen=True)
class LlmSettings:
    base_url: str | None = None
    token_env: str = DEFAULT_TOKEN_ENV
    timeout: float = 60.0


@dataclass(frozen=True)
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    traversal: TraversalConfig = field(default_factory=TraversalConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    grounding: FilterConfig = field(default_factory=FilterConfig)
    annotate: AnnotateConfig = field(default_factory=AnnotateConfig)
    llm: LlmSettings = field(default_factory=LlmSettings)
    out: Path | None = None
    jobs: int = 1


_SECTIONS = {"paths", "traversal", "scoring", "grounding", "annotate", "out", "jobs"}


def _take(section: dict, allowed: set[str], name: str) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    return section


def from_mapping(data: dict[str, Any]) -> RunConfig:
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    try:
        p = _take(data.get("paths", {}), {f.name for f in fields(Paths)}, "paths")
        paths = Paths(**{k: Path(v) for k, v in p.items()})
        t = _take(data.get("traversal", {}), {f.name for f in fields(TraversalConfig)}, "traversal")
        traversal = TraversalConfig(**t)
        s = dict(_take(data.get("scoring", {}), {"gamma", "alpha", "top_k"}, "scoring"))
        if "alpha" in s:
            s["alpha"] = tuple(s["alpha"])
        if "top_k" in s:
            s["K"] = s.pop("top_k")
        scoring = ScoringConfig(**s)
        g = _take(data.get("grounding", {}), {"housekeeping_prefixes", "case_sensitive"}, "grounding")
        grounding = FilterConfig(
            frozenset(g.get("housekeeping_prefixes", DEFAULT_HOUSEKEEPING_PREFIXES)),
            g.get("case_sensitive", False),
        )
        a = dict(
            _take(
                data.get("annotate", {}),
                {f.name for f in fields(AnnotateConfig)} | {f.name for f in fields(LlmSettings)},
                "annotate",
            )
        )
        llm = LlmSettings(**{k: a.pop(k) for k in list(a) if k in {f.name for f in fields(LlmSettings)}})
        annotate = AnnotateConfig(**a)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    out = Path(data["out"]) if data.get("out") else None
    return RunConfig(paths, traversal, scoring, grounding, annotate, llm, out, int(data.get("jobs", 1)))


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return from_mapping(data)


def with_overrides(cfg: RunConfig, **kw: Any) -> RunConfig:
    """Apply flag values (``None`` means "not given")."""
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        paths = replace(
            cfg.paths,
            **{k: Path(kw[k]) for k in ("graph_nodes", "graph_edges", "obo", "dataset") if k in kw},
        )
        traversal = replace(cfg.traversal, **({"k": kw["k"]} if "k" in kw else {}))
        scoring = cfg.scoring
        if "alpha" in kw:
            scoring = ScoringConfig(alpha=tuple(kw["alpha"]), K=scoring.K)
        elif "gamma" in kw:
            scoring = ScoringConfig(gamma=kw["gamma"], K=scoring.K)
        if "top_k" in kw:
            scoring = replace(scoring, K=kw["top_k"])
        ann = {k: kw[k] for k in ("include_paths", "dry_run", "model", "temperature") if k in kw}
        if "jobs" in kw:
            ann["max_in_flight"] = kw["jobs"]
        annotate = replace(cfg.annotate, **ann)
        llm = replace(cfg.llm, **({"base_url": kw["base_url"]} if "base_url" in kw else {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        paths=paths,
        traversal=traversal,
        scoring=scoring,
        grounding=cfg.grounding,
        annotate=annotate,
        llm=llm,
        out=Path(kw["out"]) if "out" in kw else cfg.out,
        jobs=kw.get("jobs", cfg.jobs),
    )
