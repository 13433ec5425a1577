"""Maximum-entropy estimation of latent model strengths.

The program solved here is::

    maximise    H(p) = -sum_i p_i ln p_i
    subject to  sum_i p_i = 1
                p_w - q (p_w + p_l) >= 0     for every preference constraint
                p_i >= epsilon

Each preference constraint says that the winner ``w`` of a human-judged pair
must hold at least a share ``q`` of the pair's combined weight. Constraints
are homogeneous and linear, so the feasible region is a polytope and the
problem is strictly concave with a unique optimum.

The solver is a primal-dual interior-point method started at the uniform
distribution, followed by a Newton polish on the identified active set. The
returned point is verified independently of the iteration (feasibility,
KKT stationarity) before it is handed back.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
import dataclasses
import enum
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .core import ModelSet, WeightVector, entropy
from .errors import Infeasible, NonConvergence, RangeError
from .ingest import PreferenceMatrix

logger = logging.getLogger(__name__)

# margins above -FEASIBILITY_SLACK count as feasible; covers LP round-off
# without admitting genuinely violated sets (whose margin is at most -epsilon)
FEASIBILITY_SLACK = 1e-12

_STEP_TO_BOUNDARY = 0.995

# below this margin rows are probed for implicit equality
_DEGENERATE_MARGIN = 1e-9


@dataclass(frozen=True)
class PreferenceConstraint:
    """``p[winner] >= q * (p[winner] + p[loser])``, indices in canonical order."""

    winner: int
    loser: int
    q: float

    def __post_init__(self) -> None:
        if self.winner == self.loser:
            raise ValueError("constraint needs two distinct models")
        if not 0.5 <= self.q <= 1.0:
            raise RangeError(f"oriented constraint share q={self.q!r} outside [0.5, 1]")

    def residual(self, p) -> float:
        return p[self.winner] - self.q * (p[self.winner] + p[self.loser])

    def row(self, n: int) -> np.ndarray:
        a = np.zeros(n)
        a[self.winner] = 1.0 - self.q
        a[self.loser] = -self.q
        return a


@dataclass(frozen=True)
class ConstraintSet:
    models: ModelSet
    constraints: tuple[PreferenceConstraint, ...]
    epsilon: float = 1e-8

    def __init__(
        self, models: ModelSet, constraints: Iterable[PreferenceConstraint], epsilon: float = 1e-8
    ) -> None:
        constraints = tuple(constraints)
        if not epsilon > 0:
            raise RangeError("epsilon must be positive")
        if models.n * epsilon >= 1.0:
            raise RangeError(f"epsilon={epsilon:g} leaves no room on the simplex for {models.n} models")
        pairs = set()
        for c in constraints:
            if not (0 <= c.winner < models.n and 0 <= c.loser < models.n):
                raise ValueError(f"constraint {c} references an index outside 0..{models.n - 1}")
            pair = frozenset((c.winner, c.loser))
            if pair in pairs:
                raise ValueError(f"more than one constraint for pair {sorted(pair)}")
            pairs.add(pair)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "epsilon", float(epsilon))

    def __len__(self) -> int:
        return len(self.constraints)

    def describe(self, c: PreferenceConstraint) -> dict:
        return {"winner": self.models[c.winner], "loser": self.models[c.loser], "q": c.q}

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked inequality system ``G p >= h``: preferences first, then bounds."""
        n = self.models.n
        rows = [c.row(n) for c in self.constraints]
        G = np.vstack(rows + [np.eye(n)]) if rows else np.eye(n)
        h = np.concatenate([np.zeros(len(rows)), np.full(n, self.epsilon)])
        return G, h


@dataclass(frozen=True)
class SolverOptions:
    epsilon: float = 1e-8
    constraint_tolerance: float = 1e-8
    stationarity_tolerance: float = 1e-6
    max_iterations: int = 1000

    def __post_init__(self) -> None:
        for name in ("epsilon", "constraint_tolerance", "stationarity_tolerance"):
            if not getattr(self, name) > 0:
                raise RangeError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise RangeError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SolveReport:
    weights: WeightVector
    constraints: ConstraintSet
    active_constraints: tuple[PreferenceConstraint, ...]
    iterations: int
    relaxation_lambda: float = 1.0
    kkt_residual: float = 0.0
    residuals: dict = field(default_factory=dict)
    dropped_constraints: tuple[PreferenceConstraint, ...] = ()

    def to_json(self) -> dict:
        return {
            "models": list(self.weights.models.ids),
            "p": list(self.weights.p),
            "entropy": self.weights.entropy,
            "active_constraints": [self.constraints.describe(c) for c in self.active_constraints],
            "relaxation_lambda": self.relaxation_lambda,
            "iterations": self.iterations,
            "dropped_constraints": [self.constraints.describe(c) for c in self.dropped_constraints],
        }


def build_constraints(pm: PreferenceMatrix, epsilon: float = 1e-8) -> ConstraintSet:
    """One constraint per judged pair, oriented toward the empirical winner.

    An even split (``P = 0.5``) is oriented toward the lexicographically
    smaller id.
    """
    models = pm.models
    out = []
    for lo, hi in pm.pairs():
        p_lo = pm.prob[(lo, hi)]
        if p_lo >= 0.5:
            out.append(PreferenceConstraint(models.index(lo), models.index(hi), p_lo))
        else:
            out.append(PreferenceConstraint(models.index(hi), models.index(lo), pm.prob[(hi, lo)]))
    return ConstraintSet(models, out, epsilon)


def _max_margin(cs: ConstraintSet) -> tuple[float, np.ndarray]:
    # maximise t s.t. sum p = 1, p >= eps, every row of G p - h >= t
    G, h = cs.matrix()
    m, n = G.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-G, np.ones((m, 1))])
    b_ub = -h
    A_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    bounds = [(cs.epsilon, 1.0)] * n + [(None, None)]
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"feasibility LP failed: {res.message}")
    return float(-res.fun), res.x[:n]


def check_feasibility(cs: ConstraintSet) -> float:
    """Largest uniform slack achievable on every constraint, bounds included.

    Non-negative iff some ``p`` on the simplex with ``p >= epsilon`` satisfies
    every preference constraint.
    """
    return _max_margin(cs)[0]


def is_feasible(margin: float) -> bool:
    return margin >= -FEASIBILITY_SLACK


def infeasible_subset(cs: ConstraintSet) -> list[PreferenceConstraint]:
    """A minimal infeasible subset, found with a deletion filter.

    Returns an empty list when ``cs`` is feasible.
    """
    if is_feasible(check_feasibility(cs)):
        return []
    keep = list(cs.constraints)
    for c in list(keep):
        trial = [k for k in keep if k is not c]
        if not is_feasible(check_feasibility(ConstraintSet(cs.models, trial, cs.epsilon))):
            keep = trial
    return keep


def relax_constraints(cs: ConstraintSet, lam: float) -> ConstraintSet:
    """Pull every share toward 0.5: ``q' = 0.5 + lam * (q - 0.5)``."""
    if not 0.0 <= lam <= 1.0:
        raise RangeError(f"relaxation lambda={lam!r} outside [0, 1]")
    relaxed = [
        PreferenceConstraint(c.winner, c.loser, 0.5 + lam * (c.q - 0.5)) for c in cs.constraints
    ]
    return ConstraintSet(cs.models, relaxed, cs.epsilon)


def auto_relax(
    cs: ConstraintSet, margin_target: float = 1e-6, width: float = 1e-6
) -> tuple[ConstraintSet, float]:
    """Largest ``lam`` in [0, 1] whose relaxed set reaches ``margin_target``.

    Found by bisection down to ``width``. When even ``lam = 0`` misses the
    target (a preference cycle pins the cycle members to equal weight, so the
    margin there is exactly 0) the fully collapsed set is returned: it is
    always feasible because the uniform point satisfies every ``q = 0.5``
    constraint.
    """
    if check_feasibility(cs) >= margin_target:
        return cs, 1.0
    floor = relax_constraints(cs, 0.0)
    floor_margin = check_feasibility(floor)
    assert is_feasible(floor_margin), "q = 0.5 constraints must admit the uniform point"
    if floor_margin < margin_target:
        logger.warning(
            "margin target %.1e unreachable by relaxation (margin %.3e at lambda=0); "
            "returning the fully relaxed set",
            margin_target,
            floor_margin + 0.0,  # no "-0" in the log
        )
        return floor, 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if check_feasibility(relax_constraints(cs, mid)) >= margin_target:
            lo = mid
        else:
            hi = mid
    return relax_constraints(cs, lo), lo


def prune_cycles(cs: ConstraintSet) -> tuple[ConstraintSet, list[PreferenceConstraint]]:
    """Drop the least decisive constraints until no preference cycle is binding.

    A directed cycle of oriented constraints is infeasible as soon as one of
    its shares exceeds 0.5, and scaling all shares toward 0.5 only resolves
    it at ``lam = 0``. Instead, while some strongly connected component of
    the winner -> loser graph contains a share above 0.5, the constraint
    inside that component with the share closest to 0.5 is removed (ties
    broken by winner then loser id). Components made only of even splits
    are kept; they just tie their members.
    """
    kept = list(cs.constraints)
    dropped: list[PreferenceConstraint] = []
    while True:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(cs.models.n))
        graph.add_edges_from((c.winner, c.loser) for c in kept)
        candidates = []
        for comp in nx.strongly_connected_components(graph):
            inner = [c for c in kept if c.winner in comp and c.loser in comp]
            if any(c.q > 0.5 for c in inner):
                candidates.extend(inner)
        if not candidates:
            break
        worst = min(candidates, key=lambda c: (c.q, cs.models[c.winner], cs.models[c.loser]))
        kept.remove(worst)
        dropped.append(worst)
    return ConstraintSet(cs.models, kept, cs.epsilon), dropped


def _row_max(G, h, k: int, cs: ConstraintSet) -> float:
    # largest slack row k can reach anywhere on the feasible set
    n = cs.models.n
    res = linprog(
        -G[k],
        A_ub=-G,
        b_ub=-h,
        A_eq=np.ones((1, n)),
        b_eq=[1.0],
        bounds=[(cs.epsilon, 1.0)] * n,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"slack LP failed: {res.message}")
    return float(-res.fun - h[k])


def implicit_equalities(cs: ConstraintSet, margin: float | None = None) -> np.ndarray:
    """Mask over the rows of ``cs.matrix()`` that hold with equality at every feasible point.

    Such rows arise when preferences at ``q = 0.5`` close a cycle. When the
    margin is clearly positive no row can be implicit and no LP is solved.
    """
    G, h = cs.matrix()
    if margin is None:
        margin = check_feasibility(cs)
    if margin > _DEGENERATE_MARGIN:
        return np.zeros(G.shape[0], dtype=bool)
    return np.array([_row_max(G, h, k, cs) <= _DEGENERATE_MARGIN for k in range(G.shape[0])])


def _independent_rows(E: np.ndarray) -> np.ndarray:
    _, r, piv = scipy.linalg.qr(E.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > 1e-12 * max(1.0, diag[0]))) if diag.size else 0
    return np.sort(piv[:rank])


def _interior_point(G, h, E, e, n, opts: SolverOptions):
    """Infeasible-start primal-dual interior point (Mehrotra predictor-corrector).

    Minimises ``sum p ln p`` subject to ``E p = e`` and ``G p >= h``, starting
    from the uniform distribution. ``E`` must have full row rank.
    """
    m, r = G.shape[0], E.shape[0]
    p = np.full(n, 1.0 / n)
    s = np.maximum(G @ p - h, 1.0 / n)
    z = np.ones(m)
    y = np.linalg.lstsq(E.T, np.log(p) + 1.0 - G.T @ z, rcond=None)[0]

    def residuals(p, y, s, z):
        r_d = np.log(p) + 1.0 - E.T @ y - G.T @ z
        r_e = E @ p - e
        r_i = G @ p - h - s
        return r_d, r_e, r_i

    def newton(p, s, z, r_d, r_e, r_i, r_c):
        d = z / s
        K = np.zeros((n + r, n + r))
        K[:n, :n] = np.diag(1.0 / p) + G.T @ (d[:, None] * G)
        K[:n, n:] = -E.T
        K[n:, :n] = E
        rhs = np.concatenate([-r_d + G.T @ ((r_c - z * r_i) / s), -r_e])
        sol = np.linalg.solve(K, rhs)
        dp, dy = sol[:n], sol[n:]
        ds = G @ dp + r_i
        dz = (r_c - z * ds) / s
        return dp, dy, ds, dz

    def max_step(x, dx):
        neg = dx < 0
        if not neg.any():
            return 1.0
        return min(1.0, float(np.min(-x[neg] / dx[neg])))

    def converged(r_d, r_e, r_i, mu):
        return (
            np.max(np.abs(r_d)) <= 1e-11
            and np.max(np.abs(r_e), initial=0.0) <= 1e-14
            and np.max(np.abs(r_i), initial=0.0) <= 1e-14
            and mu <= 1e-14
        )

    it = 0
    for it in range(1, opts.max_iterations + 1):
        r_d, r_e, r_i = residuals(p, y, s, z)
        mu = float(s @ z) / m if m else 0.0
        if converged(r_d, r_e, r_i, mu):
            return p, y, s, z, it - 1
        dp, dy, ds, dz = newton(p, s, z, r_d, r_e, r_i, -s * z)
        alpha = min(max_step(p, dp), max_step(s, ds), max_step(z, dz))
        mu_aff = float((s + alpha * ds) @ (z + alpha * dz)) / m if m else 0.0
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # complementarity must not outrun feasibility, or the iterates stall
        # at the boundary with the dual residual stuck
        infeas = max(np.max(np.abs(r_d)), np.max(np.abs(r_e), initial=0.0), np.max(np.abs(r_i), initial=0.0))
        target = max(sigma * mu, 0.1 * min(mu, infeas))
        dp, dy, ds, dz = newton(p, s, z, r_d, r_e, r_i, target - s * z - ds * dz)
        alpha = min(
            1.0,
            _STEP_TO_BOUNDARY * max_step(p, dp),
            _STEP_TO_BOUNDARY * max_step(s, ds),
            _STEP_TO_BOUNDARY * max_step(z, dz),
        )
        p = p + alpha * dp
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz
        if alpha < 1e-12:
            break
    r_d, r_e, r_i = residuals(p, y, s, z)
    raise NonConvergence(
        f"interior point did not converge in {it} iterations",
        iterate=p.copy(),
        residuals={
            "dual": float(np.max(np.abs(r_d))),
            "equality": float(np.max(np.abs(r_e), initial=0.0)),
            "inequality": float(np.max(np.abs(r_i), initial=0.0)),
            "complementarity": float(s @ z) / m if m else 0.0,
        },
    )


def _polish(C, c, p, lam, max_iter: int = 30):
    """Newton on ``min sum p ln p  s.t.  C p = c`` from a nearby point."""
    n, k = p.size, C.shape[0]

    def kkt(p, lam):
        return np.concatenate([np.log(p) + 1.0 - C.T @ lam, C @ p - c])

    it = 0
    for it in range(1, max_iter + 1):
        J = np.zeros((n + k, n + k))
        J[:n, :n] = np.diag(1.0 / p)
        J[:n, n:] = -C.T
        J[n:, :n] = C
        step = np.linalg.lstsq(J, -kkt(p, lam), rcond=None)[0]
        dp = step[:n]
        t = 1.0
        while np.any(p + t * dp <= 0):
            t *= 0.5
        p = p + t * dp
        lam = lam + t * step[n:]
        if np.max(np.abs(step)) <= 1e-15:
            break
    return p, lam, float(np.max(np.abs(kkt(p, lam)))), it


def kkt_stationarity(G, h, p, tol: float) -> tuple[float, np.ndarray]:
    """Norm of the entropy gradient projected onto the null space of the
    active constraint gradients (normalisation row always included).

    A constraint is active when its residual is at most ``10 * tol``.
    """
    active = (G @ p - h) <= 10.0 * tol
    B = np.vstack([np.ones(p.size), G[active]])
    grad = -(np.log(p) + 1.0)
    coef = np.linalg.lstsq(B.T, grad, rcond=None)[0]
    return float(np.linalg.norm(grad - B.T @ coef)), active


def solve_max_entropy(cs: ConstraintSet, opts: SolverOptions | None = None) -> SolveReport:
    """Maximum-entropy weights subject to ``cs``.

    Deterministic: identical inputs give bit-identical output.

    Raises:
        Infeasible: if ``cs`` admits no point; carries the margin and a
            minimal violating subset. Relax first with :func:`auto_relax`.
        NonConvergence: if the iteration limit is hit or the final point
            fails verification.
    """
    opts = opts or SolverOptions(epsilon=cs.epsilon)
    if opts.epsilon != cs.epsilon:
        cs = ConstraintSet(cs.models, cs.constraints, opts.epsilon)
    margin = check_feasibility(cs)
    if not is_feasible(margin):
        raise Infeasible(margin, [cs.describe(c) for c in infeasible_subset(cs)])

    n = cs.models.n
    G, h = cs.matrix()
    implicit = implicit_equalities(cs, margin)
    E = np.vstack([np.ones((1, n)), G[implicit]])
    e = np.concatenate([[1.0], h[implicit]])
    keep = _independent_rows(E)
    E, e = E[keep], e[keep]
    Gi, hi = G[~implicit], h[~implicit]
    p, y, s, z, iterations = _interior_point(Gi, hi, E, e, n, opts)

    active = s < z
    C = np.vstack([E, Gi[active]])
    c = np.concatenate([e, hi[active]])
    keep = _independent_rows(C)
    lam0 = np.concatenate([y, z[active]])[keep]
    p_pol, lam, err, polish_its = _polish(C[keep], c[keep], p, lam0)
    iterations += polish_its
    signed = keep >= E.shape[0]  # multipliers of inequality rows must be >= 0
    if (
        err <= 1e-12
        and np.all(p_pol > 0)
        and np.all(G @ p_pol - h >= -1e-14)
        and np.all(lam[signed] >= -1e-9)
    ):
        p = p_pol
    else:
        logger.debug("active-set polish rejected (err=%.2e); keeping interior point", err)

    tol = opts.constraint_tolerance
    kkt, active_rows = kkt_stationarity(G, h, p, tol)
    slack = G @ p - h
    residuals = {
        "min_constraint_residual": float(slack[: len(cs)].min()) if len(cs) else 0.0,
        "sum_error": float(abs(p.sum() - 1.0)),
        "min_p": float(p.min()),
        "kkt_stationarity": kkt,
    }
    if (
        residuals["min_constraint_residual"] < -tol
        or residuals["sum_error"] > tol
        or residuals["min_p"] < opts.epsilon - tol
        or kkt > opts.stationarity_tolerance
    ):
        raise NonConvergence("solution failed post-hoc verification", iterate=p, residuals=residuals)

    weights = WeightVector(cs.models, p.tolist(), entropy(p.tolist()), epsilon=opts.epsilon)
    active_constraints = tuple(c for c, a in zip(cs.constraints, active_rows[: len(cs)]) if a)
    return SolveReport(weights, cs, active_constraints, iterations, 1.0, kkt, residuals)


class RelaxMode(enum.Enum):
    SCALE = "scale"  # auto_relax only
    PRUNE = "prune"  # prune_cycles, then auto_relax for what remains


def fit_weights(
    pm: PreferenceMatrix,
    opts: SolverOptions | None = None,
    relax: RelaxMode | str | None = None,
    margin_target: float = 1e-6,
) -> SolveReport:
    """Constraints from ``pm``, optional relaxation, then solve.

    Without ``relax`` an infeasible preference matrix raises
    :class:`Infeasible`; constraints are only altered on request, and every
    alteration is recorded in the report.
    """
    opts = opts or SolverOptions()
    cs = build_constraints(pm, opts.epsilon)
    lam = 1.0
    dropped: list[PreferenceConstraint] = []
    if relax is not None:
        mode = RelaxMode(relax)
        if mode is RelaxMode.PRUNE:
            cs, dropped = prune_cycles(cs)
        cs, lam = auto_relax(cs, margin_target)
    report = solve_max_entropy(cs, opts)
    return dataclasses.replace(report, relaxation_lambda=lam, dropped_constraints=tuple(dropped))
