"""Adjoint gradient descent with an optimal-step line search, the baseline solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

from monocontrol.core import (
    ControlTrajectory,
    ProblemDefinition,
    collocation_adjoints,
    collocation_states,
    cost,
    increment_field,
    l2_norm,
)
from monocontrol.errors import BracketingError, ConfigError, LineSearchStalled
from monocontrol.monotonic import IterationRow, RunRecord, RunStatus
from monocontrol.propagators import propagate_adjoint, propagate_forward

logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# Limits on model-predicted steps, as multiples of the last trial step
MAX_EXTRAPOLATION = 100.0
MIN_SHRINK = 0.01


@dataclass
class LineSearchConfig:
    bracket_growth: float = 2.0
    golden_tol: float = 1e-4
    max_probes: int = 50
    initial_step: float | None = None
    parabolic_first: bool = True
    # decreases below decrease_tol * (1 + |J|) count as round-off
    decrease_tol: float = 1e-12

    def __post_init__(self):
        if not 0 < self.golden_tol < 1:
            raise ConfigError(f"golden_tol must lie in (0, 1), got {self.golden_tol}")
        if not 0 <= self.decrease_tol < 1:
            raise ConfigError(f"decrease_tol must lie in [0, 1), got {self.decrease_tol}")
        if not self.bracket_growth > 1:
            raise ConfigError(f"bracket_growth must exceed 1, got {self.bracket_growth}")
        if self.max_probes < 2:
            raise ConfigError("max_probes must be at least 2")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ConfigError(f"initial_step must be positive, got {self.initial_step}")


# <~~GRADIENT~~>
def compute_gradient(problem: ProblemDefinition, v: ControlTrajectory) -> ControlTrajectory:
    """g_n = Delta(v_n, v_n; X^c_n, P_n), the gradient of J under the discrete pairing."""
    X = propagate_forward(problem, v)
    Y = propagate_adjoint(problem, v, X)
    colloc = collocation_states(problem, X)
    values = increment_field(problem, v.values, v.values, colloc, collocation_adjoints(problem, Y))
    return v.replace(values)


# <~~LINE SEARCH~~>
def _golden(phi: Callable[[float], float], bracket, values, tol: float) -> tuple[float, float]:
    a, b, c = bracket
    fa, fb, fc = values
    x0, x3 = a, c
    # probe the larger sub-interval first
    if abs(c - b) > abs(b - a):
        x1, f1 = b, fb
        x2 = b + (1.0 - GOLDEN) * (c - b)
        f2 = phi(x2)
    else:
        x2, f2 = b, fb
        x1 = b - (1.0 - GOLDEN) * (b - a)
        f1 = phi(x1)
    while abs(x3 - x0) > tol:
        if f2 < f1:
            x0, x1 = x1, x2
            x2 = GOLDEN * x1 + (1.0 - GOLDEN) * x3
            f1, f2 = f2, phi(x2)
        else:
            x3, x2 = x2, x1
            x1 = GOLDEN * x2 + (1.0 - GOLDEN) * x0
            f2, f1 = f1, phi(x1)
    return (x1, f1) if f1 < f2 else (x2, f2)


def _validate_bracket(bracket, values):
    a, b, c = bracket
    fa, fb, fc = values
    if not (a < b < c or c < b < a):
        raise BracketingError(f"bracket points out of order: {bracket}")
    if not (fb < fa and fb < fc):
        raise BracketingError(f"middle point does not bracket a minimum: {values}")


def golden_section_search(
    phi: Callable[[float], float],
    bracket: tuple[float, float, float],
    cfg: LineSearchConfig | None = None,
) -> float:
    """Minimize phi inside a bracket (a, b, c) with phi(b) below both ends."""
    cfg = cfg or LineSearchConfig()
    values = tuple(phi(x) for x in bracket)
    _validate_bracket(bracket, values)
    step, _ = _golden(phi, bracket, values, cfg.golden_tol * abs(bracket[2] - bracket[0]))
    return step


def _model_minimizer(f0: float, slope: float, s: float, fs: float) -> float | None:
    """Minimizer of the parabola with value f0 and slope at 0 passing through (s, fs)."""
    curvature = (fs - f0 - slope * s) / (s * s)
    if not curvature > 0:
        return None
    return -slope / (2.0 * curvature)


def _bracket(phi, f0: float, s0: float, cfg: LineSearchConfig, slope: float | None = None):
    """
    Find (a, b, c) with phi(b) below phi(a) and phi(c), starting from step s0.\n
    Without `slope` the step grows or shrinks by bracket_growth. With the slope of phi at 0
    the next trial step comes from the parabola through f0 and the last trial, and a shrink that
    reaches a step whose predicted decrease is below round-off raises LineSearchStalled.
    """
    s, fs = s0, phi(s0)
    probes = 1
    if fs < f0:
        lower, f_lower = 0.0, f0
        while probes < cfg.max_probes:
            s_next = s * cfg.bracket_growth
            model = None if slope is None else _model_minimizer(f0, slope, s, fs)
            if model is not None:
                # the model puts phi back at f0 at twice its minimizer
                s_next = max(s_next, min(2.0 * model, MAX_EXTRAPOLATION * s))
            f_next = phi(s_next)
            probes += 1
            if f_next > fs:
                return (lower, s, s_next), (f_lower, fs, f_next)
            lower, f_lower, s, fs = s, fs, s_next, f_next
    else:
        noise = cfg.decrease_tol * (1.0 + abs(f0))
        upper, f_upper = s, fs
        while probes < cfg.max_probes:
            s = upper / cfg.bracket_growth
            if slope is not None:
                model = _model_minimizer(f0, slope, upper, f_upper)
                if model is not None:
                    s = max(min(model, s), MIN_SHRINK * upper)
                if -slope * s <= noise:
                    raise LineSearchStalled(s, -slope * s)
            fs = phi(s)
            probes += 1
            if fs < f0:
                return (0.0, s, upper), (f0, fs, f_upper)
            upper, f_upper = s, fs
    raise BracketingError(f"no bracket after {probes} probes from step {s0:.3e}")


def _parabolic_vertex(bracket, values) -> float | None:
    a, b, c = bracket
    fa, fb, fc = values
    numerator = (b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)
    denominator = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    if denominator == 0:
        return None
    vertex = b - 0.5 * numerator / denominator
    if not (min(a, c) < vertex < max(a, c)) or not math.isfinite(vertex):
        return None
    return vertex


def line_search(
    phi: Callable[[float], float],
    f0: float,
    s0: float,
    cfg: LineSearchConfig,
    slope: float | None = None,
) -> tuple[float, float]:
    """
    Bracket the minimum of phi along s > 0, then refine. Returns (step, phi(step)).\n
    `slope` is phi'(0) when known; see `_bracket`.
    """
    bracket, values = _bracket(phi, f0, s0, cfg, slope)
    if cfg.parabolic_first:
        vertex = _parabolic_vertex(bracket, values)
        if vertex is not None:
            f_vertex = phi(vertex)
            if f_vertex < values[1]:
                return vertex, f_vertex
    _validate_bracket(bracket, values)
    if f0 - values[1] <= cfg.decrease_tol * (1.0 + abs(f0)):
        # golden refinement cannot resolve anything at this level
        return bracket[1], values[1]
    return _golden(phi, bracket, values, cfg.golden_tol * abs(bracket[2] - bracket[0]))


# <~~DRIVER~~>
def run_gradient(
    problem: ProblemDefinition,
    v0: ControlTrajectory,
    cfg: LineSearchConfig,
    max_iter: int = 100,
    stop_tol: float = 1e-10,
) -> RunRecord:
    """
    Steepest descent v <- v - s* g with s* from bracketing plus golden section.\n
    Stops as converged when ||g|| <= stop_tol * (1 + ||g0||), when the line search finds no
    decrease above round-off, or when an accepted step gains less than
    cfg.decrease_tol * (1 + |J|).
    """
    record = RunRecord(solver="gradient")
    v = v0
    X = propagate_forward(problem, v)
    J = cost(problem, v, X)
    record.cost_evaluations += 1
    step_guess = cfg.initial_step
    g0_norm = None

    for k in range(max_iter):
        Y = propagate_adjoint(problem, v, X)
        colloc = collocation_states(problem, X)
        g = increment_field(problem, v.values, v.values, colloc, collocation_adjoints(problem, Y))
        g_norm = l2_norm(problem, g, colloc)
        if g0_norm is None:
            g0_norm = g_norm
        if g_norm <= stop_tol * (1.0 + g0_norm):
            record.rows.append(IterationRow(k, J, 0.0))
            record.status = RunStatus.CONVERGED
            break
        if step_guess is None:
            step_guess = 1.0 / g_norm

        def phi(s: float, v=v, g=g) -> float:
            trial = v.replace(v.values - s * g)
            record.cost_evaluations += 1
            return cost(problem, trial, propagate_forward(problem, trial))

        try:
            # phi'(0) = -<g, g> under the discrete pairing
            step, J_next = line_search(phi, J, step_guess, cfg, slope=-(g_norm**2))
        except LineSearchStalled as e:
            logger.info("gradient stationary at iteration %d: %s", k, e)
            record.rows.append(IterationRow(k, J, 0.0))
            record.status = RunStatus.CONVERGED
            break
        except BracketingError as e:
            logger.warning("gradient line search failed at iteration %d: %s", k, e)
            record.status = RunStatus.BRACKET_FAILURE
            break

        record.rows.append(IterationRow(k, J, step * g_norm))
        logger.info("gradient k=%d J=%.10e step=%.3e", k, J, step)
        v = v.replace(v.values - step * g)
        X = propagate_forward(problem, v)
        gain = J - J_next
        J = J_next
        step_guess = step
        if gain <= cfg.decrease_tol * (1.0 + abs(J)):
            record.status = RunStatus.CONVERGED
            break
    else:
        record.status = RunStatus.ITERATION_CAP

    record.final_control = v
    record.final_cost = J
    return record
