"""Agreement between rankings, and between predicted and human pairwise verdicts."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import ModelSet, RankingResult
from .errors import EmptyInput, MissingPrediction, Undefined
from .ingest import JudgmentSet
from .ranking import ContestOutcome


@dataclass(frozen=True)
class RankVector:
    """Rank per model (1 = best), ties sharing their average rank."""

    models: ModelSet
    rank: tuple[float, ...]

    def __post_init__(self) -> None:
        rank = tuple(float(r) for r in self.rank)
        n = self.models.n
        if len(rank) != n:
            raise ValueError("rank vector length differs from the model count")
        if abs(sum(rank) - n * (n + 1) / 2) > 1e-9 or min(rank) < 1 or max(rank) > n:
            raise ValueError(f"not an average-rank vector: {rank}")
        object.__setattr__(self, "rank", rank)

    @classmethod
    def from_scores(cls, models: ModelSet, scores: Mapping[str, float] | Sequence[float]) -> RankVector:
        """Rank by score, higher score = better rank."""
        if isinstance(scores, Mapping):
            scores = [scores[m] for m in models.ids]
        ranks = stats.rankdata(-np.asarray(scores, dtype=float), method="average")
        return cls(models, tuple(ranks.tolist()))

    @classmethod
    def from_ranking(cls, result: RankingResult) -> RankVector:
        """Rank by win rate. Equal win rates tie; the id tie-break of the order is not used."""
        return cls.from_scores(result.models, result.win_rate)


def _check(a: RankVector, b: RankVector) -> None:
    if a.models != b.models:
        raise ValueError("rank vectors are over different model sets")
    for v in (a, b):
        if len(set(v.rank)) == 1:
            raise Undefined("correlation undefined: every model is tied")


def _doubled(rank: Sequence[float]) -> list[int] | None:
    # average ranks are multiples of 1/2, so twice the rank is an integer
    out = [2 * r for r in rank]
    return [int(v) for v in out] if all(float(v).is_integer() for v in out) else None


def spearman(a: RankVector, b: RankVector) -> float:
    """Spearman's rho: Pearson correlation of the (average-tie) rank vectors.

    Half-integer ranks are correlated with exact integer sums, so identical
    rankings give exactly 1.
    """
    _check(a, b)
    x, y = _doubled(a.rank), _doubled(b.rank)
    if x is None or y is None:
        return float(stats.spearmanr(a.rank, b.rank).statistic)
    n = len(x)
    cov = n * sum(u * v for u, v in zip(x, y)) - sum(x) * sum(y)
    prod = (n * sum(u * u for u in x) - sum(x) ** 2) * (n * sum(v * v for v in y) - sum(y) ** 2)
    root = math.isqrt(prod)
    return cov / root if root * root == prod else cov / math.sqrt(prod)


def kendall(a: RankVector, b: RankVector) -> float:
    """Kendall's tau-b, ``(C - D) / sqrt((P - T_a) (P - T_b))``.

    Computed from integer pair counts so that tie-free inputs give the
    correctly rounded quotient.
    """
    _check(a, b)
    x, y = np.asarray(a.rank), np.asarray(b.rank)
    iu = np.triu_indices(x.size, k=1)
    sx = np.sign(np.subtract.outer(x, x)[iu]).astype(np.int64)
    sy = np.sign(np.subtract.outer(y, y)[iu]).astype(np.int64)
    pairs = sx.size
    untied_x = pairs - int(np.count_nonzero(sx == 0))
    untied_y = pairs - int(np.count_nonzero(sy == 0))
    return int(sx @ sy) / math.sqrt(untied_x * untied_y)


def _pair_key(prompt_id: str, x: str, y: str) -> tuple[str, str, str]:
    return (prompt_id, *sorted((x, y)))


def pairwise_accuracy(predicted: Sequence[ContestOutcome], human: JudgmentSet | Sequence) -> float:
    """Share of human judgments whose verdict the predictions reproduce.

    Predictions and judgments are matched on (prompt_id, unordered pair). A
    human tie matches only a predicted tie. Several predictions for one key
    (e.g. both presentation orders) are merged by majority; a split vote
    counts as a tie.
    """
    judgments = list(human)
    if not judgments:
        raise EmptyInput("no human judgments to score against")
    votes: dict[tuple[str, str, str], dict] = defaultdict(lambda: defaultdict(int))
    for out in predicted:
        votes[_pair_key(out.prompt_id, out.model_a, out.model_b)][out.winner] += 1
    verdict = {}
    for key, tally in votes.items():
        ranked = sorted(tally.items(), key=lambda kv: -kv[1])
        top = [w for w, c in ranked if c == ranked[0][1]]
        verdict[key] = top[0] if len(top) == 1 else None
    hits = 0
    for j in judgments:
        key = _pair_key(j.prompt_id, j.model_a, j.model_b)
        if key not in verdict:
            raise MissingPrediction(key)
        hits += verdict[key] == j.winner
    return hits / len(judgments)
