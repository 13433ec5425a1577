"""Calibrating pairwise LLM-judge scores with maximum-entropy strength weights
fitted to a small sample of human preferences."""

from .core import ModelSet, RankingResult, ScoreRecord, ScoreTable, WeightVector, canonical_index
from .errors import (
    DuplicateError,
    EmptyInput,
    EndpointError,
    Infeasible,
    JudgecalError,
    MissingPrediction,
    NonConvergence,
    ParseError,
    ParseFailure,
    RangeError,
    SelfPair,
    Undefined,
    UnknownModel,
)
from .ingest import (
    JudgmentSet,
    PreferenceMatrix,
    TiePolicy,
    aggregate_preferences,
    human_reference_ranking,
    load_judgments,
    load_scores,
)
from .maxent import (
    ConstraintSet,
    PreferenceConstraint,
    RelaxMode,
    SolverOptions,
    SolveReport,
    auto_relax,
    build_constraints,
    check_feasibility,
    fit_weights,
    relax_constraints,
    solve_max_entropy,
)
from .metrics import RankVector, kendall, pairwise_accuracy, spearman
from .ranking import calibrated_outcome, rank, win_fractions, win_rates

__version__ = "0.1.0"
