"""Immutable domain types shared by the rest of the package.

Constructors validate their invariants and raise on violation, so a value
that exists is a valid value.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import DuplicateError, RangeError, SelfPair, UnknownModel

SCORE_MIN = 1.0
SCORE_MAX = 10.0


@dataclass(frozen=True)
class ModelSet:
    """Distinct model identifiers in canonical (lexicographic) order."""

    ids: tuple[str, ...]
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __init__(self, ids: Iterable[str]) -> None:
        ids = list(ids)
        for mid in ids:
            if not isinstance(mid, str) or not mid:
                raise ValueError(f"model ids must be non-empty strings, got {mid!r}")
        if len(set(ids)) != len(ids):
            dupes = sorted({m for m in ids if ids.count(m) > 1})
            raise ValueError(f"duplicate model ids: {dupes}")
        if len(ids) < 2:
            raise ValueError(f"need at least 2 models, got {len(ids)}")
        ordered = tuple(sorted(ids))
        object.__setattr__(self, "ids", ordered)
        object.__setattr__(self, "_index", {m: k for k, m in enumerate(ordered)})

    @property
    def n(self) -> int:
        return len(self.ids)

    def index(self, model_id: str) -> int:
        try:
            return self._index[model_id]
        except KeyError:
            raise UnknownModel(model_id) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.ids)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, model_id: object) -> bool:
        return model_id in self._index

    def __getitem__(self, k: int) -> str:
        return self.ids[k]


def canonical_index(models: ModelSet, model_id: str) -> int:
    """Zero-based position of ``model_id`` in lexicographic order.

    Raises:
        UnknownModel: if the id is not part of ``models``.
    """
    return models.index(model_id)


def _check_score(value: float, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RangeError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not (SCORE_MIN <= value <= SCORE_MAX):
        raise RangeError(f"{name}={value!r} outside [{SCORE_MIN:g}, {SCORE_MAX:g}]")
    return value


@dataclass(frozen=True)
class ScoreRecord:
    """One judged pairwise contest: both scores come from a single judge call."""

    prompt_id: str
    model_a: str
    model_b: str
    score_a: float
    score_b: float
    order_swapped: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.prompt_id, str) or not self.prompt_id:
            raise ValueError("prompt_id must be a non-empty string")
        if self.model_a == self.model_b:
            raise SelfPair(f"model_a and model_b are both {self.model_a!r}")
        object.__setattr__(self, "score_a", _check_score(self.score_a, "score_a"))
        object.__setattr__(self, "score_b", _check_score(self.score_b, "score_b"))
        object.__setattr__(self, "order_swapped", bool(self.order_swapped))

    @property
    def contest_key(self) -> tuple[str, frozenset[str], bool]:
        return (self.prompt_id, frozenset((self.model_a, self.model_b)), self.order_swapped)

    def swapped(self) -> ScoreRecord:
        """The same contest with the two sides exchanged."""
        return ScoreRecord(
            self.prompt_id, self.model_b, self.model_a, self.score_b, self.score_a, self.order_swapped
        )

    def to_json(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "model_a": self.model_a,
            "model_b": self.model_b,
            "score_a": self.score_a,
            "score_b": self.score_b,
            "order_swapped": self.order_swapped,
        }


@dataclass(frozen=True)
class ScoreTable:
    records: tuple[ScoreRecord, ...]
    models: ModelSet

    def __init__(self, records: Iterable[ScoreRecord], models: ModelSet) -> None:
        records = tuple(records)
        seen: set = set()
        for rec in records:
            for mid in (rec.model_a, rec.model_b):
                if mid not in models:
                    raise UnknownModel(mid, f"prompt {rec.prompt_id!r}")
            if rec.contest_key in seen:
                raise DuplicateError(
                    f"duplicate contest ({rec.prompt_id!r}, {rec.model_a!r}/{rec.model_b!r}, "
                    f"order_swapped={rec.order_swapped})"
                )
            seen.add(rec.contest_key)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "models", models)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ScoreRecord]:
        return iter(self.records)

    def sorted(self) -> ScoreTable:
        """Copy with records in a scheduling-independent order."""
        key = lambda r: (r.prompt_id, r.model_a, r.model_b, r.order_swapped)
        return ScoreTable(sorted(self.records, key=key), self.models)


def entropy(p: Sequence[float]) -> float:
    """Shannon entropy in nats, ``-sum p ln p`` (0 ln 0 taken as 0)."""
    return -math.fsum(x * math.log(x) for x in p if x > 0)


@dataclass(frozen=True)
class WeightVector:
    """Latent strength distribution over models, aligned to canonical index."""

    models: ModelSet
    p: tuple[float, ...]
    entropy: float
    epsilon: float = 1e-8

    def __init__(
        self,
        models: ModelSet,
        p: Iterable[float],
        entropy_value: float | None = None,
        epsilon: float = 1e-8,
    ) -> None:
        p = tuple(float(x) for x in p)
        if len(p) != models.n:
            raise ValueError(f"weight vector has {len(p)} entries for {models.n} models")
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        # constraints are only met to solver tolerance; allow that much below epsilon
        if any(not math.isfinite(x) or x <= 0 or x < epsilon - 1e-8 for x in p):
            raise RangeError(f"weights must be >= epsilon={epsilon:g}: {p}")
        if abs(math.fsum(p) - 1.0) > 1e-8:
            raise RangeError(f"weights sum to {math.fsum(p)!r}, not 1")
        h = entropy(p)
        if entropy_value is not None and abs(entropy_value - h) > 1e-10:
            raise ValueError(f"stored entropy {entropy_value!r} disagrees with computed {h!r}")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "entropy", h if entropy_value is None else float(entropy_value))
        object.__setattr__(self, "epsilon", float(epsilon))

    @classmethod
    def uniform(cls, models: ModelSet, epsilon: float = 1e-8) -> WeightVector:
        return cls(models, [1.0 / models.n] * models.n, epsilon=epsilon)

    def weight(self, model_id: str) -> float:
        return self.p[self.models.index(model_id)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.models.ids, self.p))


@dataclass(frozen=True)
class RankingResult:
    """Per-model win rates plus the descending order (ties broken by id)."""

    models: ModelSet
    win_rate: tuple[float, ...]
    order: tuple[str, ...]
    missing_pairs: tuple[tuple[str, str], ...] = ()
    flagged: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.win_rate)
        if len(rates) != self.models.n:
            raise ValueError("win_rate must have one entry per model")
        if any(not (0.0 <= r <= 1.0) for r in rates):
            raise RangeError(f"win rates must lie in [0, 1]: {rates}")
        if tuple(self.order) != _order(self.models, rates):
            raise ValueError("order does not sort win rates descending with id tie-break")
        object.__setattr__(self, "win_rate", rates)
        object.__setattr__(self, "order", tuple(self.order))

    @classmethod
    def from_win_rates(
        cls,
        models: ModelSet,
        rates: Sequence[float],
        missing_pairs: Iterable[tuple[str, str]] = (),
        flagged: Iterable[str] = (),
    ) -> RankingResult:
        rates = tuple(float(r) for r in rates)
        return cls(models, rates, _order(models, rates), tuple(missing_pairs), tuple(flagged))

    def rate(self, model_id: str) -> float:
        return self.win_rate[self.models.index(model_id)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.models.ids, self.win_rate))

    def to_json(self) -> dict:
        return {
            "order": list(self.order),
            "win_rate": self.as_dict(),
            "missing_pairs": [list(pair) for pair in self.missing_pairs],
        }


def _order(models: ModelSet, rates: Sequence[float]) -> tuple[str, ...]:
    return tuple(m for _, m in sorted(zip(rates, models.ids), key=lambda t: (-t[0], t[1])))
