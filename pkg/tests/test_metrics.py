import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from judgecal.core import ModelSet, RankingResult
from judgecal.errors import EmptyInput, MissingPrediction, Undefined
from judgecal.ingest import Choice, JudgmentSet, PreferenceJudgment
from judgecal.metrics import RankVector, kendall, pairwise_accuracy, spearman
from judgecal.ranking import ContestOutcome


def rv(ranks):
    return RankVector(ModelSet([f"m{k}" for k in range(len(ranks))]), ranks)


def pearson(x, y):
    mx, my = sum(x) / len(x), sum(y) / len(y)
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return num / math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))


def tau_b(x, y):
    c = d = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        sx, sy = (x[i] > x[j]) - (x[i] < x[j]), (y[i] > y[j]) - (y[i] < y[j])
        tx += sx == 0
        ty += sy == 0
        c += sx * sy > 0
        d += sx * sy < 0
    p = len(x) * (len(x) - 1) // 2
    return (c - d) / math.sqrt((p - tx) * (p - ty))


def test_spearman_examples():
    assert spearman(rv((1, 2, 3, 4, 5)), rv((1, 2, 3, 4, 5))) == 1.0
    assert spearman(rv((1, 2, 3, 4, 5)), rv((5, 4, 3, 2, 1))) == -1.0
    assert spearman(rv((1, 2, 3)), rv((2, 1, 3))) == 0.5


def test_kendall_examples():
    assert kendall(rv((1, 2, 3)), rv((1, 2, 3))) == 1.0
    assert kendall(rv((1, 2, 3)), rv((1, 3, 2))) == 1 / 3
    assert kendall(rv((1, 2, 3, 4)), rv((4, 3, 2, 1))) == -1.0


def test_all_tied_is_undefined():
    for fn in (spearman, kendall):
        with pytest.raises(Undefined):
            fn(rv((2, 2, 2)), rv((1, 2, 3)))


def test_rank_vector_average_ranks():
    v = RankVector.from_scores(ModelSet(["a", "b", "c", "d"]), {"a": 0.9, "b": 0.5, "c": 0.5, "d": 0.1})
    assert v.rank == (1.0, 2.5, 2.5, 4.0)
    r = RankingResult.from_win_rates(ModelSet(["a", "b", "c"]), [0.5, 1.0, 0.0])
    assert RankVector.from_ranking(r).rank == (2.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        RankVector(ModelSet(["a", "b", "c"]), (1, 1, 1.5))


tied_ranks = st.integers(3, 9).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n), st.lists(st.integers(0, 4), min_size=n, max_size=n))
).filter(lambda t: len(set(t[0])) > 1 and len(set(t[1])) > 1)


@given(tied_ranks)
@settings(max_examples=150)
def test_tie_aware_oracles(pair):
    x, y = pair
    models = ModelSet([f"m{k}" for k in range(len(x))])
    a, b = RankVector.from_scores(models, x), RankVector.from_scores(models, y)
    assert spearman(a, b) == pytest.approx(pearson(a.rank, b.rank), abs=1e-12)
    assert kendall(a, b) == pytest.approx(tau_b(a.rank, b.rank), abs=1e-12)
    assert spearman(a, b) == pytest.approx(spearman(b, a), abs=1e-15)
    assert kendall(a, b) == kendall(b, a)
    assert -1 <= spearman(a, b) <= 1 and -1 <= kendall(a, b) <= 1


@given(st.integers(3, 10).flatmap(lambda n: st.tuples(st.permutations(range(1, n + 1)), st.permutations(range(1, n + 1)))))
@settings(max_examples=100)
def test_monotone_relabel_invariance(pair):
    x, y = pair
    f = lambda r: r ** 3 + 2 * r
    models = ModelSet([f"m{k}" for k in range(len(x))])
    a, b = RankVector(models, x), RankVector(models, y)
    fa, fb = RankVector.from_scores(models, [-f(r) for r in x]), RankVector.from_scores(models, [-f(r) for r in y])
    assert spearman(fa, fb) == pytest.approx(spearman(a, b), abs=1e-12)
    assert kendall(fa, fb) == kendall(a, b)


M = ModelSet(["m1", "m2"])


def human(choices):
    return JudgmentSet([PreferenceJudgment(f"q{k}", "m1", "m2", Choice(c)) for k, c in enumerate(choices)], M)


def predicted(winners):
    return [ContestOutcome(f"q{k}", "m1", "m2", w, {"m1": 1.0, "m2": -1.0, None: 0.0}[w]) for k, w in enumerate(winners)]


def test_accuracy_examples():
    assert pairwise_accuracy(predicted(["m1", "m1", "m2", "m2", "m1"]), human("aabbb")) == 0.8
    assert pairwise_accuracy(predicted([None, None]), human(["tie", "tie"])) == 1.0
    with pytest.raises(EmptyInput):
        pairwise_accuracy(predicted(["m1"]), [])
    with pytest.raises(MissingPrediction):
        pairwise_accuracy(predicted(["m1"]), human("ab"))


def test_accuracy_matches_reversed_presentation():
    out = [ContestOutcome("q0", "m2", "m1", "m2", 1.0)]
    assert pairwise_accuracy(out, human("b")) == 1.0


def test_accuracy_majority_over_duplicate_predictions():
    both = [ContestOutcome("q0", "m1", "m2", "m1", 1.0), ContestOutcome("q0", "m1", "m2", "m2", -1.0)]
    assert pairwise_accuracy(both, human(["tie"])) == 1.0
    assert pairwise_accuracy(both, human("a")) == 0.0
