import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from judgecal.core import ModelSet
from judgecal.errors import Infeasible, NonConvergence, RangeError
from judgecal.ingest import PreferenceMatrix
from judgecal.maxent import (
    ConstraintSet,
    PreferenceConstraint,
    RelaxMode,
    SolverOptions,
    auto_relax,
    build_constraints,
    check_feasibility,
    fit_weights,
    infeasible_subset,
    is_feasible,
    kkt_stationarity,
    prune_cycles,
    relax_constraints,
    solve_max_entropy,
)

M12 = ModelSet(["m1", "m2"])
ABC = ModelSet(["A", "B", "C"])
CYCLE = ConstraintSet(ABC, [PreferenceConstraint(0, 1, 0.75), PreferenceConstraint(1, 2, 0.75), PreferenceConstraint(2, 0, 0.75)])


def pm_from(models, probs):
    prob, support = {}, {}
    for (i, j), v in probs.items():
        prob[(i, j)], prob[(j, i)] = v, 1.0 - v
        support[tuple(sorted((i, j)))] = 10
    return PreferenceMatrix(models, prob, support)


def random_instance(rng, n):
    """Feasible by construction: every share is between 0.5 and a hidden point's share."""
    hidden = rng.dirichlet(np.ones(n))
    cons = []
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < 0.3:
            continue
        share = hidden[i] / (hidden[i] + hidden[j])
        q = 0.5 + rng.random() * abs(share - 0.5)
        cons.append(PreferenceConstraint(i, j, q) if share >= 0.5 else PreferenceConstraint(j, i, q))
    return ConstraintSet(ModelSet([f"m{k}" for k in range(n)]), cons)


def verify(cs, rep, opts=SolverOptions()):
    """Post-hoc feasibility check, independent of the solver."""
    p = np.array(rep.weights.p)
    for c in rep.constraints.constraints:
        assert c.residual(p) >= -opts.constraint_tolerance
    assert abs(math.fsum(p) - 1.0) <= opts.constraint_tolerance
    assert p.min() >= opts.epsilon - opts.constraint_tolerance


def test_build_constraints_orientation():
    assert build_constraints(pm_from(M12, {("m1", "m2"): 0.7})).constraints == (PreferenceConstraint(0, 1, 0.7),)
    (c,) = build_constraints(pm_from(M12, {("m1", "m2"): 0.3})).constraints
    assert (c.winner, c.loser) == (1, 0) and c.q == pytest.approx(0.7, abs=1e-15)
    assert build_constraints(pm_from(M12, {("m2", "m1"): 0.5})).constraints == (PreferenceConstraint(0, 1, 0.5),)
    assert build_constraints(PreferenceMatrix(M12, {}, {})).constraints == ()


def test_constraint_validation():
    with pytest.raises(ValueError):
        PreferenceConstraint(1, 1, 0.6)
    with pytest.raises(RangeError):
        PreferenceConstraint(0, 1, 0.4)
    with pytest.raises(ValueError):
        ConstraintSet(M12, [PreferenceConstraint(0, 1, 0.6), PreferenceConstraint(1, 0, 0.5)])
    with pytest.raises(ValueError):
        ConstraintSet(M12, [], epsilon=0.0)


def test_feasibility_examples():
    assert check_feasibility(ConstraintSet(ABC, [])) > 0
    assert check_feasibility(CYCLE) < 0
    assert check_feasibility(ConstraintSet(M12, [PreferenceConstraint(0, 1, 0.7)])) > 0


def test_cycle_margin_matches_lp_oracle():
    # by symmetry the optimum is uniform; slack there is 1/3 - 0.75 * 2/3 = -1/6
    assert check_feasibility(CYCLE) == pytest.approx(-1 / 6, abs=1e-9)


def test_infeasible_subset_is_minimal():
    extra = ConstraintSet(
        ModelSet(["A", "B", "C", "D"]),
        [PreferenceConstraint(0, 1, 0.75), PreferenceConstraint(1, 2, 0.75), PreferenceConstraint(2, 0, 0.75),
         PreferenceConstraint(0, 3, 0.6)],
    )
    subset = infeasible_subset(extra)
    assert len(subset) == 3 and PreferenceConstraint(0, 3, 0.6) not in subset
    assert not is_feasible(check_feasibility(ConstraintSet(extra.models, subset)))
    for k in range(3):
        assert is_feasible(check_feasibility(ConstraintSet(extra.models, subset[:k] + subset[k + 1:])))


@pytest.mark.parametrize("lam,expected", [(0.5, 0.65), (1.0, 0.8), (0.0, 0.5)])
def test_relax_examples(lam, expected):
    cs = ConstraintSet(M12, [PreferenceConstraint(0, 1, 0.8)])
    assert relax_constraints(cs, lam).constraints[0].q == pytest.approx(expected, abs=1e-15)


def test_relax_range():
    with pytest.raises(RangeError):
        relax_constraints(CYCLE, 1.5)
    with pytest.raises(RangeError):
        relax_constraints(CYCLE, -0.1)


def test_auto_relax_examples():
    feasible = ConstraintSet(M12, [PreferenceConstraint(0, 1, 0.7)])
    assert auto_relax(feasible)[1] == 1.0
    halves = ConstraintSet(ABC, [PreferenceConstraint(0, 1, 0.5), PreferenceConstraint(1, 2, 0.5)])
    assert auto_relax(halves)[1] == 1.0


def test_auto_relax_bisection_certificate():
    # a chain pushing against the epsilon bound: infeasible at full strength
    models = ModelSet(["a", "b", "c"])
    cs = ConstraintSet(models, [PreferenceConstraint(0, 1, 1.0), PreferenceConstraint(1, 2, 0.9)], epsilon=0.01)
    assert check_feasibility(cs) < 0
    relaxed, lam = auto_relax(cs, 1e-6)
    assert 0 < lam < 1
    assert check_feasibility(relaxed) >= 1e-6
    assert check_feasibility(relax_constraints(cs, lam + 1e-3)) < 1e-6


def test_auto_relax_cycle_collapses_to_zero(caplog):
    relaxed, lam = auto_relax(CYCLE, 1e-6)
    assert lam == 0.0
    assert all(c.q == 0.5 for c in relaxed.constraints)
    assert is_feasible(check_feasibility(relaxed))
    assert "unreachable" in caplog.text


def test_solve_examples():
    models = ModelSet([f"m{k}" for k in range(10)])
    rep = solve_max_entropy(ConstraintSet(models, []))
    assert np.allclose(rep.weights.p, 0.1, atol=1e-12)
    assert rep.weights.entropy == pytest.approx(math.log(10), abs=1e-12)
    assert rep.relaxation_lambda == 1.0

    rep = solve_max_entropy(ConstraintSet(M12, [PreferenceConstraint(0, 1, 0.7)]))
    assert rep.weights.p == pytest.approx((0.7, 0.3), abs=1e-9)
    assert len(rep.active_constraints) == 1


def test_solve_three_model_chain():
    # both active: p1 = 1.5 p2, p2 = 1.5 p3, so p = (9, 6, 4) / 19
    cs = ConstraintSet(ModelSet(["1", "2", "3"]), [PreferenceConstraint(0, 1, 0.6), PreferenceConstraint(1, 2, 0.6)])
    rep = solve_max_entropy(cs)
    assert rep.weights.p == pytest.approx((9 / 19, 6 / 19, 4 / 19), abs=1e-9)
    assert rep.weights.p == pytest.approx((0.4737, 0.3158, 0.2105), abs=1e-4)
    assert len(rep.active_constraints) == 2


def test_solve_three_model_chain_grid_oracle():
    cs = ConstraintSet(ModelSet(["1", "2", "3"]), [PreferenceConstraint(0, 1, 0.6), PreferenceConstraint(1, 2, 0.6)])
    g = np.arange(1, 1000) / 1000
    p1, p2 = np.meshgrid(g, g)
    p3 = 1 - p1 - p2
    ok = (p3 > 0) & (0.4 * p1 - 0.6 * p2 >= 0) & (0.4 * p2 - 0.6 * p3 >= 0)
    P = np.stack([p1[ok], p2[ok], p3[ok]], axis=1)
    best = np.max(-np.sum(P * np.log(P), axis=1))
    assert solve_max_entropy(cs).weights.entropy >= best - 1e-12


def test_default_options():
    opts = SolverOptions()
    assert opts.epsilon == 1e-8 and opts.constraint_tolerance == 1e-8
    assert opts.stationarity_tolerance == 1e-6 and opts.max_iterations == 1000
    with pytest.raises(ValueError):
        SolverOptions(constraint_tolerance=0)


def test_solve_infeasible_raises_with_subset():
    with pytest.raises(Infeasible) as exc:
        solve_max_entropy(CYCLE)
    assert exc.value.margin < 0
    assert {d["winner"] for d in exc.value.violating} == {"A", "B", "C"}


def test_solve_nonconvergence_carries_iterate():
    rng = np.random.default_rng(0)
    cs = random_instance(rng, 6)
    with pytest.raises(NonConvergence) as exc:
        solve_max_entropy(cs, SolverOptions(max_iterations=1))
    assert exc.value.iterate is not None
    assert exc.value.residuals


def test_single_half_constraint_gives_uniform():
    for n in (2, 3, 5):
        cs = ConstraintSet(ModelSet([f"m{k}" for k in range(n)]), [PreferenceConstraint(0, n - 1, 0.5)])
        assert np.allclose(solve_max_entropy(cs).weights.p, 1 / n, atol=1e-12)


def test_relaxed_cycle_solves_to_uniform():
    rep = solve_max_entropy(relax_constraints(CYCLE, 0.0))
    assert np.allclose(rep.weights.p, 1 / 3, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(2, 6))
@settings(max_examples=40, deadline=None)
def test_solution_feasible_and_stationary(seed, n):
    cs = random_instance(np.random.default_rng(seed), n)
    rep = solve_max_entropy(cs)
    verify(cs, rep)
    G, h = cs.matrix()
    kkt, _ = kkt_stationarity(G, h, np.array(rep.weights.p), 1e-8)
    assert kkt <= 1e-6


@given(st.integers(0, 10_000), st.integers(2, 5))
@settings(max_examples=25, deadline=None)
def test_beats_dirichlet_oracle(seed, n):
    rng = np.random.default_rng(seed)
    cs = random_instance(rng, n)
    P = rng.dirichlet(np.ones(n), size=20_000)
    ok = np.ones(len(P), bool)
    for c in cs.constraints:
        ok &= P[:, c.winner] - c.q * (P[:, c.winner] + P[:, c.loser]) >= 0
    if ok.any():
        best = np.max(-np.sum(P[ok] * np.log(P[ok]), axis=1))
        assert solve_max_entropy(cs).weights.entropy >= best - 1e-4


def test_concavity_of_entropy_on_feasible_points():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
        H = lambda x: -np.sum(x * np.log(x))
        assert H((p + q) / 2) >= (H(p) + H(q)) / 2 - 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_monotone_relaxation(seed):
    cs = random_instance(np.random.default_rng(seed), 4)
    values = [solve_max_entropy(relax_constraints(cs, lam)).weights.entropy for lam in (0, 0.25, 0.5, 0.75, 1)]
    for lo, hi in zip(values, values[1:]):
        assert hi <= lo + 1e-10


@given(st.integers(0, 10_000), st.permutations(range(5)))
@settings(max_examples=25, deadline=None)
def test_relabeling_invariance(seed, perm):
    cs = random_instance(np.random.default_rng(seed), 5)
    # model k is renamed so that it lands at canonical index perm[k]
    names = [f"x{perm[k]}" for k in range(5)]
    relabeled = ConstraintSet(
        ModelSet(names),
        [PreferenceConstraint(perm[c.winner], perm[c.loser], c.q) for c in reversed(cs.constraints)],
    )
    p = solve_max_entropy(cs).weights.p
    p2 = solve_max_entropy(relabeled).weights.p
    for k in range(5):
        assert abs(p[k] - p2[perm[k]]) <= 1e-10


def test_deterministic_bit_identical():
    cs = random_instance(np.random.default_rng(42), 6)
    a, b = solve_max_entropy(cs), solve_max_entropy(cs)
    assert [x.hex() for x in a.weights.p] == [x.hex() for x in b.weights.p]
    assert a.iterations == b.iterations


def test_prune_cycles_drops_weakest():
    cs = ConstraintSet(ABC, [PreferenceConstraint(0, 1, 0.8), PreferenceConstraint(1, 2, 0.7), PreferenceConstraint(2, 0, 0.6)])
    pruned, dropped = prune_cycles(cs)
    assert dropped == [PreferenceConstraint(2, 0, 0.6)]
    assert is_feasible(check_feasibility(pruned))
    # an even split cycle is harmless and kept
    halves = relax_constraints(CYCLE, 0.0)
    assert prune_cycles(halves) == (halves, [])


def test_fit_weights_modes():
    pm = pm_from(ABC, {("A", "B"): 0.75, ("B", "C"): 0.75, ("C", "A"): 0.75})
    with pytest.raises(Infeasible):
        fit_weights(pm)
    scaled = fit_weights(pm, relax=RelaxMode.SCALE)
    assert scaled.relaxation_lambda == 0.0
    pruned = fit_weights(pm, relax="prune")
    assert len(pruned.dropped_constraints) == 1
    assert pruned.relaxation_lambda == 1.0
    verify(pruned.constraints, pruned)


def test_report_json_has_full_precision():
    rep = solve_max_entropy(ConstraintSet(ModelSet(["1", "2", "3"]), [PreferenceConstraint(0, 1, 0.6), PreferenceConstraint(1, 2, 0.6)]))
    obj = json.loads(json.dumps(rep.to_json()))
    assert set(obj) >= {"models", "p", "entropy", "active_constraints", "relaxation_lambda", "iterations"}
    assert obj["p"] == list(rep.weights.p)
    assert obj["active_constraints"][0] == {"winner": "1", "loser": "2", "q": 0.6}
