"""Gene weighting and convergence scoring.

Each grounded gene gets ``w_rank * w_idf``, where

* ``w_rank = 1 / log2(rank + 2)`` rewards genes near the top of the sentence,
* ``w_idf = ln(|T| / df + 1)`` penalises genes that reach many candidates.

A target's score sums the weights of its supporters per hop bin, scaled by a
non-increasing hop-decay ``alpha_h``. Summation order is fixed (hop ascending,
then rank ascending) so scores are bit-for-bit reproducible.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from .grounding import GroundedGeneSet
from .traversal import SupportTable


@dataclass(frozen=True)
class ScoringConfig:
    """Hop decay and top-K settings.

    Give either explicit ``alpha`` weights (``alpha[0]`` is hop 1) or a
    geometric factor ``gamma`` with ``alpha_h = gamma ** (h - 1)``.
    """

    gamma: float = 0.5
    alpha: tuple[float, ...] | None = None
    K: int = 10

    def __post_init__(self):
        if self.alpha is not None:
            alpha = tuple(float(a) for a in self.alpha)
            if not alpha or any(a <= 0 for a in alpha):
                raise ValueError("alpha weights must be positive")
            if any(b > a for a, b in zip(alpha, alpha[1:])):
                raise ValueError(f"alpha must be non-increasing in hop, got {alpha}")
            object.__setattr__(self, "alpha", alpha)
        elif not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")

    def hop_weight(self, h: int) -> float:
        if self.alpha is None:
            return self.gamma ** (h - 1)
        if h > len(self.alpha):
            raise ValueError(f"no alpha weight for hop {h} (have {len(self.alpha)})")
        return self.alpha[h - 1]


@dataclass(frozen=True)
class GeneWeight:
    rank: int
    w_rank: float
    w_idf: float

    @property
    def combined(self) -> float:
        return self.w_rank * self.w_idf


@dataclass(frozen=True)
class Supporter:
    symbol: str
    rank: int
    weight: float


@dataclass(frozen=True)
class ScoredCandidate:
    target: str
    score: float
    supporters: dict[int, tuple[Supporter, ...]]
    supporter_count: int

    def to_dict(self, name: str | None = None) -> dict:
        out = {"target": self.target}
        if name is not None:
            out["name"] = name
        out["score"] = self.score
        out["supporters"] = {
            str(h): [{"symbol": s.symbol, "rank": s.rank, "weight": s.weight} for s in sup]
            for h, sup in sorted(self.supporters.items())
        }
        return out


def rank_weight(rank: int) -> float:
    if rank < 0:
        raise ValueError(f"rank must be >= 0, got {rank}")
    return 1.0 / math.log2(rank + 2)


def idf_weight(df: int, t_size: int) -> float:
    if t_size < 1:
        raise ValueError(f"|T| must be >= 1, got {t_size}")
    if not 1 <= df <= t_size:
        raise ValueError(f"df must lie in [1, {t_size}], got {df}")
    return math.log(t_size / df + 1)


def gene_weights(table: SupportTable) -> dict[int, GeneWeight]:
    """Weights for every gene that reaches at least one candidate; df=0 genes are skipped."""
    t_size = table.target_count
    return {
        rank: GeneWeight(rank, rank_weight(rank), idf_weight(df, t_size))
        for rank, df in sorted(table.df.items())
        if df > 0
    }


def score_candidates(
    table: SupportTable,
    grounded: GroundedGeneSet,
    config: ScoringConfig = ScoringConfig(),
) -> list[ScoredCandidate]:
    """Score every candidate target; sorted by score descending, then target id ascending."""
    symbols = {g.rank: g.symbol for g in grounded}
    if set(symbols) != set(table.df):
        raise ValueError("support table and grounded gene set describe different genes")
    weights = gene_weights(table)
    scored = []
    for t in table.candidates:
        total = 0.0
        bins: dict[int, tuple[Supporter, ...]] = {}
        count = 0
        for h in sorted(table.support[t]):
            ranks = table.support[t][h]
            part = 0.0
            sup = []
            for r in sorted(ranks):
                w = weights[r].combined
                part += w
                sup.append(Supporter(symbols[r], r, w))
            total += config.hop_weight(h) * part
            bins[h] = tuple(sup)
            count += len(sup)
        scored.append(ScoredCandidate(t, total, bins, count))
    scored.sort(key=lambda c: (-c.score, c.target))
    return scored


def select_top_k(ranked: Sequence[ScoredCandidate], K: int) -> list[ScoredCandidate]:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return list(ranked[:K])
