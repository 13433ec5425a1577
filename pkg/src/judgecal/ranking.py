"""Calibrated pairwise outcomes, win fractions and the final ranking."""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass

from .core import ModelSet, RankingResult, ScoreRecord, ScoreTable, WeightVector
from .errors import EmptyInput, UnknownModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContestOutcome:
    """Result of one contest under the calibrated win rule.

    ``margin`` is ``p_a * score_a - p_b * score_b``; ``winner`` is None for an
    exact tie.
    """

    prompt_id: str
    model_a: str
    model_b: str
    winner: str | None
    margin: float

    def __post_init__(self) -> None:
        expected = self.model_a if self.margin > 0 else self.model_b if self.margin < 0 else None
        if self.winner != expected:
            raise ValueError(f"winner {self.winner!r} inconsistent with margin {self.margin!r}")


@dataclass(frozen=True)
class WinFractionMatrix:
    """``w[(i, j)]``: share of the i-vs-j contests won by i, ties worth half."""

    models: ModelSet
    w: dict[tuple[str, str], float]
    counts: dict[tuple[str, str], int]

    def missing_pairs(self) -> list[tuple[str, str]]:
        return [
            (i, j)
            for i, j in itertools.combinations(self.models.ids, 2)
            if not self.counts.get((i, j))
        ]


def calibrated_outcome(rec: ScoreRecord, weights: WeightVector) -> ContestOutcome:
    """Apply the weighted win rule: a beats b iff ``p_a * S_a > p_b * S_b``."""
    for mid in (rec.model_a, rec.model_b):
        if mid not in weights.models:
            raise UnknownModel(mid, "not covered by the weight vector")
    margin = weights.weight(rec.model_a) * rec.score_a - weights.weight(rec.model_b) * rec.score_b
    if margin > 0:
        winner = rec.model_a
    elif margin < 0:
        winner = rec.model_b
    else:
        winner = None
    return ContestOutcome(rec.prompt_id, rec.model_a, rec.model_b, winner, margin)


def win_fractions(table: ScoreTable, weights: WeightVector) -> WinFractionMatrix:
    if not len(table):
        raise EmptyInput("score table is empty")
    wins: dict[tuple[str, str], float] = defaultdict(float)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for rec in table.records:
        out = calibrated_outcome(rec, weights)
        a, b = rec.model_a, rec.model_b
        counts[(a, b)] += 1
        counts[(b, a)] += 1
        if out.winner is None:
            wins[(a, b)] += 0.5
            wins[(b, a)] += 0.5
        else:
            loser = b if out.winner == a else a
            wins[(out.winner, loser)] += 1.0
            wins[(loser, out.winner)] += 0.0
    w = {key: wins[key] / counts[key] for key in sorted(counts)}
    return WinFractionMatrix(table.models, w, dict(sorted(counts.items())))


def win_rates(wfm: WinFractionMatrix) -> RankingResult:
    """Average win fraction against every other model.

    Opponents never met contribute 0 and are reported in ``missing_pairs``.
    """
    n = wfm.models.n
    rates = [
        sum(wfm.w.get((i, j), 0.0) for j in wfm.models.ids if j != i) / (n - 1)
        for i in wfm.models.ids
    ]
    missing = wfm.missing_pairs()
    for i, j in missing:
        logger.warning("no contests between %s and %s; pair contributes 0 to both win rates", i, j)
    return RankingResult.from_win_rates(wfm.models, rates, missing_pairs=missing)


def rank(table: ScoreTable, weights: WeightVector | None = None) -> RankingResult:
    """Ranking of ``table`` under ``weights`` (uniform weights give the raw ranking)."""
    weights = weights or WeightVector.uniform(table.models)
    return win_rates(win_fractions(table, weights))
