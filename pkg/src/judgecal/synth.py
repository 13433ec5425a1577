"""Seeded synthetic worlds for exercising the pipeline without a language model.

Ground truth is a Bradley-Terry model with a geometric strength ladder.
Human judgments are drawn from it directly; judge scores are drawn from an
additive log-strength model corrupted by a per-model verbosity bias and
Gaussian noise, then clipped to the 1-10 scale.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .core import SCORE_MAX, SCORE_MIN, ModelSet, ScoreRecord, ScoreTable
from .errors import RangeError
from .ingest import Choice, JudgmentSet, PreferenceJudgment

SCORE_CENTER = 5.5


@dataclass(frozen=True)
class SynthWorld:
    models: ModelSet
    strength: tuple[float, ...]
    length_bias: float = 0.0
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.strength) != self.models.n:
            raise ValueError("one strength per model required")
        if any(not t > 0 for t in self.strength):
            raise RangeError("strengths must be positive")
        if self.noise_sd < 0:
            raise RangeError("noise_sd must be non-negative")

    def true_order(self) -> list[str]:
        """Models strongest first."""
        return [m for _, m in sorted(zip(self.strength, self.models.ids), key=lambda t: (-t[0], t[1]))]


def model_ids(n: int) -> list[str]:
    """``m0, m1, ...`` zero-padded so that lexicographic order is index order."""
    width = len(str(n - 1))
    return [f"m{k:0{width}d}" for k in range(n)]


def gen_world(
    n: int,
    seed: int = 0,
    ratio: float = 1.3,
    length_bias: float = 0.0,
    noise_sd: float = 0.0,
) -> SynthWorld:
    """World with strengths ``ratio ** k`` for model k (so the last model is strongest)."""
    if n < 2:
        raise RangeError(f"need at least 2 models, got n={n}")
    if not ratio > 0:
        raise RangeError("ratio must be positive")
    strength = tuple(float(ratio**k) for k in range(n))
    return SynthWorld(ModelSet(model_ids(n)), strength, float(length_bias), float(noise_sd), int(seed))


def _prompt_id(k: int) -> str:
    return f"q{k:04d}"


def sample_human(
    world: SynthWorld, judgments_per_pair: int, seed: int, tie_rate: float = 0.0
) -> JudgmentSet:
    """Bradley-Terry judgments: ``i`` beats ``j`` with probability θ_i / (θ_i + θ_j).

    Judgment k of every pair uses prompt id ``q{k:04d}``, matching the prompts
    of :func:`sample_scores`. Presentation order is randomised.
    """
    if judgments_per_pair < 1:
        raise RangeError("judgments_per_pair must be at least 1")
    if not 0.0 <= tie_rate < 1.0:
        raise RangeError("tie_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    ids, theta = world.models.ids, world.strength
    out = []
    for i, j in itertools.combinations(range(world.models.n), 2):
        p_ij = theta[i] / (theta[i] + theta[j])
        u_tie = rng.random(judgments_per_pair)
        u_win = rng.random(judgments_per_pair)
        flip = rng.random(judgments_per_pair) < 0.5
        for k in range(judgments_per_pair):
            if u_tie[k] < tie_rate:
                winner = None
            else:
                winner = ids[i] if u_win[k] < p_ij else ids[j]
            a, b = (ids[j], ids[i]) if flip[k] else (ids[i], ids[j])
            choice = Choice.TIE if winner is None else Choice.A if winner == a else Choice.B
            out.append(PreferenceJudgment(_prompt_id(k), a, b, choice))
    return JudgmentSet(out, world.models)


def draw_verbosity(world: SynthWorld, seed: int) -> tuple[float, ...]:
    """The per-model verbosity levels :func:`sample_scores` uses for ``seed``."""
    return tuple(np.random.default_rng(seed).random(world.models.n).tolist())


def sample_scores(
    world: SynthWorld,
    prompts: int,
    seed: int,
    verbosity: Sequence[float] | None = None,
) -> ScoreTable:
    """One contest per unordered pair and prompt.

    ``S_ij = clip(5.5 + ln(θ_i/θ_j) + b (v_i - v_j) + N(0, σ²), 1, 10)`` and
    symmetrically for ``S_ji`` with an independent noise draw. Verbosity
    ``v`` is drawn uniformly from [0, 1) per model unless given.
    """
    if prompts < 1:
        raise RangeError("prompts must be at least 1")
    rng = np.random.default_rng(seed)
    v = rng.random(world.models.n)
    if verbosity is not None:
        if len(verbosity) != world.models.n:
            raise ValueError("one verbosity level per model required")
        v = np.asarray(verbosity, dtype=float)
    ids, theta, b, sd = world.models.ids, world.strength, world.length_bias, world.noise_sd
    records = []
    for i, j in itertools.combinations(range(world.models.n), 2):
        base = math.log(theta[i] / theta[j]) + b * (v[i] - v[j])
        noise = rng.standard_normal((prompts, 2)) * sd
        s_ij = np.clip(SCORE_CENTER + base + noise[:, 0], SCORE_MIN, SCORE_MAX)
        s_ji = np.clip(SCORE_CENTER - base + noise[:, 1], SCORE_MIN, SCORE_MAX)
        for k in range(prompts):
            records.append(ScoreRecord(_prompt_id(k), ids[i], ids[j], float(s_ij[k]), float(s_ji[k])))
    return ScoreTable(records, world.models)
