"""
Invariant checks on reduced problem sizes.

Each `*_defect` / `*_violation` function returns the worst measured quantity so
tests can assert on it directly; `run_selftest` wraps them into CheckResults
for the CLI table.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from monocontrol.core import (
    ProblemDefinition,
    collocation_adjoints,
    collocation_states,
    cost,
    delta_generic,
    increment_bound_check,
    l2_pairing,
    xi,
)
from monocontrol.errors import MonoControlError, ThetaTooSmall
from monocontrol.gradient import compute_gradient
from monocontrol.monotonic import MonotonicConfig, run, solve_vtheta
from monocontrol.problems import (
    CoParams,
    MfgProblem,
    MorseParams,
    build_co,
    build_mfg,
    build_morse,
    build_twolevel,
)
from monocontrol.propagators import propagate_adjoint, propagate_forward

logger = logging.getLogger(__name__)

FACTORIZATION_TOL = 1e-10
GRADIENT_CONSISTENCY_TOL = 1e-6
CONCAVITY_TOL = 1e-10
ADJOINT_GRADIENT_TOL = 1e-5
INCREMENT_BOUND_TOL = 1e-8
CONSERVATION_TOL = 1e-8
CLOSED_FORM_TOL = 1e-10
FIXED_POINT_RESIDUAL_TOL = 1e-8
DESCENT_SLACK = 1e-9


@dataclass
class CheckResult:
    check: str
    problem: str
    passed: bool
    measure: float
    threshold: float
    seconds: float = 0.0


def reduced_problems() -> list[ProblemDefinition]:
    """Every shipped problem at a size that keeps the suite fast."""
    return [
        build_twolevel(steps=64),
        build_morse(MorseParams(horizon=2000.0), grid_points=64, steps=200),
        build_mfg(grid_points=32, steps=40),
        build_co(CoParams(basis_size=8, periods=2.0), steps=200),
    ]


def _random_time(problem: ProblemDefinition, rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0, problem.grid.horizon))


# <~~POINTWISE IDENTITIES~~>
def factorization_defect(
    problem: ProblemDefinition,
    rng: np.random.Generator,
    samples: int = 100,
    generic: bool = False,
) -> float:
    """Worst |dot(Delta, v' - v) - (xi(v') - xi(v))| / (1 + |xi(v')| + |xi(v)|)."""
    worst = 0.0
    for _ in range(samples):
        t = _random_time(problem, rng)
        v = problem.random_control_value(rng)
        v_new = problem.random_control_value(rng)
        X = problem.random_state(rng)
        Y = problem.random_adjoint(rng)
        if generic:
            increment = delta_generic(problem, v_new, v, t, X, Y, nodes=problem.quadrature_nodes)
        else:
            increment = problem.delta(t, v_new, v, X, Y)
        xi_new, xi_old = xi(problem, t, v_new, X, Y), xi(problem, t, v, X, Y)
        gap = problem.dot(increment, np.asarray(v_new) - np.asarray(v), X) - (xi_new - xi_old)
        worst = max(worst, abs(gap) / (1.0 + abs(xi_new) + abs(xi_old)))
    return worst


def gradient_consistency_defect(
    problem: ProblemDefinition, rng: np.random.Generator, samples: int = 20, eps: float = 1e-6
) -> float:
    """
    Worst |dot(Delta(v, v), d) - central difference of xi along d| / (1 + |xi(v)| + |dot|).\n
    xi carries v-independent terms such as -<Y, i H0 X> that can dwarf its derivative, and
    their rounding survives the difference; the scale matches `factorization_defect`.
    """
    worst = 0.0
    for _ in range(samples):
        t = _random_time(problem, rng)
        v = np.asarray(problem.random_control_value(rng))
        d = np.asarray(problem.random_control_value(rng))
        X = problem.random_state(rng)
        Y = problem.random_adjoint(rng)
        analytic = problem.dot(problem.delta(t, v, v, X, Y), d, X)
        numeric = (xi(problem, t, v + eps * d, X, Y) - xi(problem, t, v - eps * d, X, Y)) / (
            2 * eps
        )
        scale = 1.0 + abs(xi(problem, t, v, X, Y)) + abs(analytic)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def concavity_violation(
    problem: ProblemDefinition, rng: np.random.Generator, samples: int = 50
) -> float:
    """Largest excess of G and F over their tangent planes on random pairs."""
    worst = -math.inf
    for _ in range(samples):
        X = problem.random_state(rng)
        X_new = problem.random_state(rng)
        step = X_new - X
        excess_g = (
            problem.terminal_cost(X_new)
            - problem.terminal_cost(X)
            - problem.inner(problem.grad_X_G(X), step)
        )
        t = _random_time(problem, rng)
        v = problem.random_control_value(rng)
        excess_f = (
            problem.running_cost(t, v, X_new)
            - problem.running_cost(t, v, X)
            - problem.inner(problem.grad_X_F(t, v, X), step)
        )
        worst = max(worst, excess_g, excess_f)
    return worst


def closed_form_defect(
    problem: ProblemDefinition, rng: np.random.Generator, samples: int = 100
) -> float:
    """
    Problems with an explicit V_theta: worst gap to the generic Picard solution.\n
    Others: worst fixed-point residual |Delta(v', v) + theta (v' - v)| of the Picard solution.
    """
    theta = problem.default_theta
    cfg = MonotonicConfig(theta_init=theta, picard_tol=1e-12, picard_max=500)
    worst = 0.0
    for _ in range(samples):
        t = _random_time(problem, rng)
        v = problem.random_control_value(rng)
        X = problem.random_state(rng)
        Y = problem.random_adjoint(rng)
        while True:
            try:
                picard = solve_vtheta(problem, t, v, X, Y, theta, cfg, use_closed_form=False)
                break
            except ThetaTooSmall:
                # below the contraction threshold for this sample
                theta *= 2.0
        if problem.has_closed_form:
            closed = problem.closed_form_vtheta(t, v, X, Y, theta)
            gap = problem.control_norm(picard - closed) / (1.0 + problem.control_norm(closed))
        else:
            gap = problem.control_norm(problem.delta(t, picard, v, X, Y) + theta * (picard - v))
        worst = max(worst, gap)
    return worst


# <~~TRAJECTORY PROPERTIES~~>
def adjoint_gradient_defect(
    problem: ProblemDefinition, rng: np.random.Generator, directions: int = 10, eps: float = 1e-5
) -> float:
    """Worst relative gap between the adjoint gradient and central differences of J."""
    v = problem.random_control(rng)
    X = propagate_forward(problem, v)
    colloc = collocation_states(problem, X)
    gradient = compute_gradient(problem, v)

    def J(values) -> float:
        trial = v.replace(values)
        return cost(problem, trial, propagate_forward(problem, trial))

    worst = 0.0
    for _ in range(directions):
        dv = problem.random_control(rng).values
        numeric = (J(v.values + eps * dv) - J(v.values - eps * dv)) / (2 * eps)
        analytic = l2_pairing(problem, gradient.values, dv, colloc)
        worst = max(worst, abs(numeric - analytic) / max(abs(analytic), 1e-10))
    return worst


def increment_bound_violation(
    problem: ProblemDefinition, rng: np.random.Generator, pairs: int = 10
) -> float:
    """Largest (lhs - rhs) / (1 + |lhs|) over random control pairs."""
    worst = -math.inf
    for _ in range(pairs):
        v = problem.random_control(rng)
        v_new = v.replace(v.values + problem.random_control(rng).values)
        lhs, rhs = increment_bound_check(problem, v, v_new)
        worst = max(worst, (lhs - rhs) / (1.0 + abs(lhs)))
    return worst


def conservation_drift(problem: ProblemDefinition, rng: np.random.Generator) -> float:
    """Mass drift for density problems, norm drift otherwise, under a random control."""
    X = propagate_forward(problem, problem.random_control(rng))
    if isinstance(problem, MfgProblem):
        reference = problem.mass(X[0])
        return max(abs(problem.mass(state) - reference) for state in X.states)
    reference = problem.norm(X[0])
    return max(abs(problem.norm(state) - reference) for state in X.states)


def adjoint_terminal_defect(problem: ProblemDefinition, rng: np.random.Generator) -> float:
    """|Y_N - grad G(X_N)|, the terminal condition of the backward solve."""
    v = problem.random_control(rng)
    X = propagate_forward(problem, v)
    Y = propagate_adjoint(problem, v, X)
    return problem.norm(Y.final - problem.grad_X_G(X.final))


def descent_violation(problem: ProblemDefinition, iterations: int = 5) -> float:
    """Worst normalized descent residual over a short monotonic run from the default control."""
    cfg = MonotonicConfig(
        theta_init=problem.default_theta,
        outer_max=iterations,
        monotonicity_slack=DESCENT_SLACK,
        time_local_sweep=problem.name == "morse",
    )
    record = run(problem, problem.default_control(), cfg)
    worst = -math.inf
    for row in record.rows:
        worst = max(worst, row.descent_residual / (1.0 + abs(row.cost)))
    return worst if record.rows else 0.0


# <~~SUITE~~>
CheckFunction = Callable[[ProblemDefinition, np.random.Generator], float]

CHECKS: list[tuple[str, CheckFunction, float]] = [
    ("factorization", factorization_defect, FACTORIZATION_TOL),
    (
        "factorization (quadrature)",
        lambda p, rng: factorization_defect(p, rng, generic=True),
        FACTORIZATION_TOL,
    ),
    ("gradient consistency", gradient_consistency_defect, GRADIENT_CONSISTENCY_TOL),
    ("concavity", concavity_violation, CONCAVITY_TOL),
    ("closed form / fixed point", closed_form_defect, CLOSED_FORM_TOL),
    ("adjoint terminal", adjoint_terminal_defect, 1e-12),
    ("adjoint gradient", adjoint_gradient_defect, ADJOINT_GRADIENT_TOL),
    ("increment bound", increment_bound_violation, INCREMENT_BOUND_TOL),
    ("conservation", conservation_drift, CONSERVATION_TOL),
    ("monotonic descent", lambda p, rng: descent_violation(p), DESCENT_SLACK),
]


def run_checks(
    problem: ProblemDefinition, seed: int = 0, checks=CHECKS
) -> list[CheckResult]:
    results = []
    for name, check, threshold in checks:
        if name == "closed form / fixed point" and not problem.has_closed_form:
            threshold = FIXED_POINT_RESIDUAL_TOL
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        try:
            measure = float(check(problem, rng))
        except MonoControlError as e:
            logger.error("check '%s' on %s raised %s", name, problem.name, e)
            measure = math.inf
        passed = measure <= threshold
        if not passed:
            logger.warning(
                "check '%s' failed on %s: %.3e > %.1e", name, problem.name, measure, threshold
            )
        results.append(
            CheckResult(name, problem.name, passed, measure, threshold, time.perf_counter() - start)
        )
    return results


def run_selftest(
    seed: int = 0, problems: list[ProblemDefinition] | None = None
) -> list[CheckResult]:
    """Run the full invariant suite on the reduced problems."""
    results = []
    for problem in problems or reduced_problems():
        results.extend(run_checks(problem, seed))
    return results
