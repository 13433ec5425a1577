"""Loading score tables and human judgments, and aggregating judgments.

Both file formats are JSON Lines (UTF-8, one object per line, blank lines
ignored, unknown fields ignored):

* scores: ``prompt_id``, ``model_a``, ``model_b``, ``score_a``, ``score_b``
  and optionally ``order_swapped`` (default false).
* judgments: ``prompt_id``, ``model_a``, ``model_b``, ``choice`` (one of
  ``"a"``, ``"b"``, ``"tie"``) and optionally ``annotator_id``.
"""

from __future__ import annotations

import enum
import json
import os
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import dataclass

from .core import ModelSet, RankingResult, ScoreRecord, ScoreTable
from .errors import DuplicateError, EmptyInput, ParseError, RangeError, SelfPair, UnknownModel

PathLike = str | os.PathLike


class Choice(enum.Enum):
    A = "a"
    B = "b"
    TIE = "tie"


class TiePolicy(enum.Enum):
    SPLIT = "split"  # a tie counts half a win for each side
    DROP = "drop"  # ties are discarded


@dataclass(frozen=True)
class PreferenceJudgment:
    prompt_id: str
    model_a: str
    model_b: str
    choice: Choice
    annotator_id: str | None = None

    def __post_init__(self) -> None:
        if self.model_a == self.model_b:
            raise SelfPair(f"model_a and model_b are both {self.model_a!r}")
        if not isinstance(self.choice, Choice):
            raise ParseError(f"invalid choice {self.choice!r}")

    @property
    def winner(self) -> str | None:
        if self.choice is Choice.A:
            return self.model_a
        if self.choice is Choice.B:
            return self.model_b
        return None

    def to_json(self) -> dict:
        out = {
            "prompt_id": self.prompt_id,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "choice": self.choice.value,
        }
        if self.annotator_id is not None:
            out["annotator_id"] = self.annotator_id
        return out


@dataclass(frozen=True)
class JudgmentSet:
    judgments: tuple[PreferenceJudgment, ...]
    models: ModelSet

    def __init__(self, judgments: Iterable[PreferenceJudgment], models: ModelSet) -> None:
        judgments = tuple(judgments)
        if not judgments:
            raise EmptyInput("judgment set is empty")
        for j in judgments:
            for mid in (j.model_a, j.model_b):
                if mid not in models:
                    raise UnknownModel(mid, f"prompt {j.prompt_id!r}")
        object.__setattr__(self, "judgments", judgments)
        object.__setattr__(self, "models", models)

    def __len__(self) -> int:
        return len(self.judgments)

    def __iter__(self) -> Iterator[PreferenceJudgment]:
        return iter(self.judgments)


@dataclass(frozen=True)
class PreferenceMatrix:
    """Empirical ``P(i > j)`` keyed by ordered id pairs.

    ``support`` is keyed by the id pair in lexicographic order and counts the
    judgments that entered the estimate.
    """

    models: ModelSet
    prob: dict[tuple[str, str], float]
    support: dict[tuple[str, str], int]

    def __post_init__(self) -> None:
        for (i, j), value in self.prob.items():
            if i == j:
                raise SelfPair(f"self pair {i!r} in preference matrix")
            if not 0.0 <= value <= 1.0:
                raise RangeError(f"P({i}>{j})={value!r} outside [0, 1]")
            back = self.prob.get((j, i))
            if back is not None and abs(value + back - 1.0) > 1e-12:
                raise ValueError(f"P({i}>{j}) + P({j}>{i}) != 1")
            if self.support.get(tuple(sorted((i, j))), 0) < 1:
                raise ValueError(f"pair {i}/{j} has no support")

    def pairs(self) -> list[tuple[str, str]]:
        """Defined unordered pairs, lexicographically sorted."""
        return sorted(self.support)

    def get(self, i: str, j: str) -> float | None:
        return self.prob.get((i, j))


def _read_jsonl(path: PathLike) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", str(path), lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", str(path), lineno)
            rows.append((lineno, obj))
    if not rows:
        raise EmptyInput(f"{path}: no records")
    return rows


def _field(obj: dict, name: str, kind, path: PathLike, lineno: int):
    if name not in obj:
        raise ParseError(f"missing field {name!r}", str(path), lineno)
    value = obj[name]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"field {name!r} must be a number", str(path), lineno)
        return float(value)
    if not isinstance(value, kind) or (kind is str and not value):
        raise ParseError(f"field {name!r} must be a non-empty {kind.__name__}", str(path), lineno)
    return value


def _check_models(ids: Iterable[str], models: ModelSet | None, path: PathLike, lineno: int) -> None:
    if models is None:
        return
    for mid in ids:
        if mid not in models:
            raise UnknownModel(mid, f"{path}:{lineno}")


def load_scores(path: PathLike, models: ModelSet | None = None) -> ScoreTable:
    """Read a scores JSONL file into a validated :class:`ScoreTable`.

    If ``models`` is omitted the model set is taken from the file itself.
    Errors name the offending line.
    """
    records = []
    seen: dict = {}
    for lineno, obj in _read_jsonl(path):
        prompt_id = _field(obj, "prompt_id", str, path, lineno)
        model_a = _field(obj, "model_a", str, path, lineno)
        model_b = _field(obj, "model_b", str, path, lineno)
        score_a = _field(obj, "score_a", float, path, lineno)
        score_b = _field(obj, "score_b", float, path, lineno)
        swapped = obj.get("order_swapped", False)
        if not isinstance(swapped, bool):
            raise ParseError("field 'order_swapped' must be a boolean", str(path), lineno)
        _check_models((model_a, model_b), models, path, lineno)
        try:
            rec = ScoreRecord(prompt_id, model_a, model_b, score_a, score_b, swapped)
        except RangeError as exc:
            raise RangeError(str(exc), str(path), lineno) from None
        except SelfPair as exc:
            raise SelfPair(str(exc), str(path), lineno) from None
        if rec.contest_key in seen:
            raise DuplicateError(
                f"duplicate contest (first seen on line {seen[rec.contest_key]})", str(path), lineno
            )
        seen[rec.contest_key] = lineno
        records.append(rec)
    if models is None:
        models = ModelSet({m for r in records for m in (r.model_a, r.model_b)})
    return ScoreTable(records, models)


def load_judgments(path: PathLike, models: ModelSet | None = None) -> JudgmentSet:
    """Read a judgments JSONL file into a validated :class:`JudgmentSet`."""
    judgments = []
    for lineno, obj in _read_jsonl(path):
        prompt_id = _field(obj, "prompt_id", str, path, lineno)
        model_a = _field(obj, "model_a", str, path, lineno)
        model_b = _field(obj, "model_b", str, path, lineno)
        token = obj.get("choice")
        try:
            choice = Choice(token)
        except ValueError:
            raise ParseError(
                f"invalid choice {token!r} (expected 'a', 'b' or 'tie')", str(path), lineno
            ) from None
        annotator = obj.get("annotator_id")
        if annotator is not None and not isinstance(annotator, str):
            raise ParseError("field 'annotator_id' must be a string", str(path), lineno)
        if model_a == model_b:
            raise SelfPair(f"model_a and model_b are both {model_a!r}", str(path), lineno)
        _check_models((model_a, model_b), models, path, lineno)
        judgments.append(PreferenceJudgment(prompt_id, model_a, model_b, choice, annotator))
    if models is None:
        models = ModelSet({m for j in judgments for m in (j.model_a, j.model_b)})
    return JudgmentSet(judgments, models)


def _write_jsonl(rows: Iterable[dict], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def save_scores(table: ScoreTable, path: PathLike) -> None:
    _write_jsonl((r.to_json() for r in table.records), path)


def save_judgments(js: JudgmentSet, path: PathLike) -> None:
    _write_jsonl((j.to_json() for j in js.judgments), path)


def _tally(js: JudgmentSet, policy: TiePolicy):
    # (lo, hi) -> [wins for lo, wins for hi, judgments used]
    tally: dict[tuple[str, str], list[float]] = defaultdict(lambda: [0.0, 0.0, 0])
    for j in js.judgments:
        lo, hi = sorted((j.model_a, j.model_b))
        winner = j.winner
        if winner is None and policy is TiePolicy.DROP:
            continue
        row = tally[(lo, hi)]
        if winner is None:
            row[0] += 0.5
            row[1] += 0.5
        elif winner == lo:
            row[0] += 1.0
        else:
            row[1] += 1.0
        row[2] += 1
    return tally


def aggregate_preferences(js: JudgmentSet, policy: TiePolicy = TiePolicy.SPLIT) -> PreferenceMatrix:
    """Empirical win probabilities for every judged pair.

    ``P(i>j) = wins_i / (wins_i + wins_j)``, with a tie worth half a win to
    each side under ``SPLIT`` and ignored under ``DROP``. Pairs without a
    usable judgment are left out of the matrix.
    """
    if not len(js):
        raise EmptyInput("judgment set is empty")
    prob: dict[tuple[str, str], float] = {}
    support: dict[tuple[str, str], int] = {}
    for (lo, hi), (w_lo, w_hi, used) in sorted(_tally(js, policy).items()):
        if used == 0:
            continue
        # divide for the larger side and complement the smaller: both
        # directions then sum to 1 exactly and 1 - P(j>i) == P(i>j) bitwise
        if w_lo >= w_hi:
            p_lo = w_lo / (w_lo + w_hi)
            p_hi = 1.0 - p_lo
        else:
            p_hi = w_hi / (w_lo + w_hi)
            p_lo = 1.0 - p_hi
        prob[(lo, hi)] = p_lo
        prob[(hi, lo)] = p_hi
        support[(lo, hi)] = used
    return PreferenceMatrix(js.models, prob, support)


def human_reference_ranking(js: JudgmentSet, policy: TiePolicy = TiePolicy.SPLIT) -> RankingResult:
    """Rank models by their raw human win rate.

    A model's rate is its wins (plus half its ties under ``SPLIT``) divided by
    the usable judgments it took part in. Models with no usable judgment get
    rate 0 and are listed in ``RankingResult.flagged``.
    """
    wins = dict.fromkeys(js.models.ids, 0.0)
    total = dict.fromkeys(js.models.ids, 0)
    for (lo, hi), (w_lo, w_hi, used) in _tally(js, policy).items():
        wins[lo] += w_lo
        wins[hi] += w_hi
        total[lo] += used
        total[hi] += used
    rates = [wins[m] / total[m] if total[m] else 0.0 for m in js.models.ids]
    flagged = [m for m in js.models.ids if total[m] == 0]
    return RankingResult.from_win_rates(js.models, rates, flagged=flagged)
