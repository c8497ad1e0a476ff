"""
Control-problem contract, trajectories, the cost functional and the increment factor.

A problem is a linear evolution equation dX/dt + A(t, v) X = B(t, v) driven by a
control v, together with a cost J(v) = int F(t, v, X) dt + G(X(T)) whose F and G
are concave in the state. Everything in here is pure: trajectories are frozen,
problem callables never mutate the problem.

DISCRETIZATION:

    Step n advances [t_n, t_{n+1}] with control values[n], coefficients at the
    interval midpoint t_{n+1/2}, and the step equation collocated at
    X^c_n = (1 - w) X_n + w X_{n+1} (w = 1/2 Crank-Nicolson, w = 1 backward Euler).
    The running cost is sampled at (t_{n+1/2}, values[n], X^c_n). The increment
    factor of interval n is evaluated at X^c_n and at the matching adjoint
    P_n = w Y_n + (1 - w) Y_{n+1}.
"""

from __future__ import annotations

import abc
import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sparse
from numpy.typing import NDArray

from monocontrol.errors import NumericError, ShapeError

DEFAULT_QUADRATURE_NODES = 4


class SchemeTag(enum.Enum):
    """Time-stepping scheme a problem asks the propagators for."""

    CRANK_NICOLSON_UNITARY = "crank_nicolson_unitary"
    IMPLICIT_PARABOLIC = "implicit_parabolic"
    DENSE_EXPONENTIAL_ORACLE = "dense_exponential_oracle"

    @property
    def collocation_weight(self) -> float:
        """Weight of X_{n+1} in the collocation state of a step."""
        return 1.0 if self is SchemeTag.IMPLICIT_PARABOLIC else 0.5


class ControlKind(enum.Enum):
    SCALAR = "scalar"
    PAIR = "pair"
    FIELD = "field"


# <~~GRID & TRAJECTORIES~~>
@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of [0, horizon] with `steps` intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ShapeError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ShapeError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def nodes(self) -> NDArray[np.float64]:
        return np.arange(self.steps + 1) * self.dt

    def midpoints(self) -> NDArray[np.float64]:
        return (np.arange(self.steps) + 0.5) * self.dt

    def midpoint(self, n: int) -> float:
        return (n + 0.5) * self.dt


def _frozen(values: NDArray) -> NDArray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ControlTrajectory:
    """
    Piecewise-constant control: values[n] acts on [t_n, t_{n+1}).\n
    values has shape (steps, *control_shape).
    """

    grid: TimeGrid
    values: NDArray[np.float64]

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim == 0 or arr.shape[0] != self.grid.steps:
            raise ShapeError(
                f"control has {arr.shape[0] if arr.ndim else 0} values, "
                f"grid has {self.grid.steps} intervals"
            )
        if not np.all(np.isfinite(arr)):
            raise NumericError("control values must be finite")
        object.__setattr__(self, "values", _frozen(arr))

    @classmethod
    def constant(cls, grid: TimeGrid, value, shape: tuple[int, ...] = ()):
        values = np.broadcast_to(np.asarray(value, dtype=np.float64), shape)
        return cls(grid, np.tile(values, (grid.steps,) + (1,) * len(shape)))

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of one control value"""
        return self.values.shape[1:]

    def __len__(self) -> int:
        return self.grid.steps

    def replace(self, values: NDArray) -> ControlTrajectory:
        """Same grid, new values."""
        return ControlTrajectory(self.grid, values)


@dataclass(frozen=True)
class _NodeTrajectory:
    grid: TimeGrid
    states: NDArray

    def __post_init__(self):
        arr = np.array(self.states)
        if arr.ndim != 2 or arr.shape[0] != self.grid.steps + 1:
            raise ShapeError(
                f"expected {self.grid.steps + 1} node vectors, got shape {arr.shape}"
            )
        object.__setattr__(self, "states", _frozen(arr))

    def __getitem__(self, n: int) -> NDArray:
        return self.states[n]

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def final(self) -> NDArray:
        return self.states[-1]


class StateTrajectory(_NodeTrajectory):
    """X(t_n) for n = 0..steps"""


class AdjointTrajectory(_NodeTrajectory):
    """Y(t_n) for n = 0..steps"""


# <~~PROBLEM CONTRACT~~>
class ProblemDefinition(abc.ABC):
    """
    Abstract contract bundling A, B, F, G and their derivatives.\n
    Gradients with respect to the state are taken for the real inner product
    `inner`; gradients with respect to the control for the pairing `dot`.
    """

    name: str = "problem"
    scheme: SchemeTag = SchemeTag.CRANK_NICOLSON_UNITARY
    control_kind: ControlKind = ControlKind.SCALAR
    quadrature_nodes: int = DEFAULT_QUADRATURE_NODES
    default_theta: float = 1.0
    # amplitude of random controls drawn by the property checks
    control_scale: float = 1.0

    def __init__(
        self,
        grid: TimeGrid,
        state_dim: int,
        weight: float = 1.0,
        is_complex: bool = True,
    ):
        self.grid = grid
        self.state_dim = state_dim
        self.weight = weight
        self.is_complex = is_complex

    # <~~SPACES~~>
    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    @property
    def control_shape(self) -> tuple[int, ...]:
        if self.control_kind is ControlKind.PAIR:
            return (2,)
        if self.control_kind is ControlKind.FIELD:
            return (self.state_dim,)
        return ()

    def inner(self, a: NDArray, b: NDArray) -> float:
        """Grid-weighted real inner product of the state space."""
        return float(self.weight * np.vdot(a, b).real)

    def norm(self, a: NDArray) -> float:
        return math.sqrt(max(self.inner(a, a), 0.0))

    def dot(self, a, b, state: NDArray | None = None) -> float:
        """Scalar product of the control space. `state` only matters for weighted problems."""
        return float(np.sum(np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64)))

    def control_norm(self, a, state: NDArray | None = None) -> float:
        return math.sqrt(max(self.dot(a, a, state), 0.0))

    # <~~DYNAMICS~~>
    @abc.abstractmethod
    def operator(self, t: float, v) -> sparse.csr_matrix:
        """Matrix of A(t, v)."""

    def apply_A(self, t: float, v, X: NDArray) -> NDArray:
        return self.operator(t, v) @ X

    def apply_A_adjoint(self, t: float, v, Y: NDArray) -> NDArray:
        # uniform grid weights: the adjoint is the conjugate transpose
        return self.operator(t, v).conj().T @ Y

    @property
    def has_source(self) -> bool:
        """Whether B(t, v) can be nonzero."""
        return False

    def eval_B(self, t: float, v) -> NDArray:
        return np.zeros(self.state_dim, dtype=self.dtype)

    def validate_control(self, v: ControlTrajectory):
        """Hook for scheme-specific warnings about a control before propagation."""

    # <~~COST~~>
    @abc.abstractmethod
    def running_cost(self, t: float, v, X: NDArray) -> float:
        """F(t, v, X)"""

    @abc.abstractmethod
    def grad_X_F(self, t: float, v, X: NDArray) -> NDArray:
        """Gradient of F in X"""

    @abc.abstractmethod
    def terminal_cost(self, X: NDArray) -> float:
        """G(X)"""

    @abc.abstractmethod
    def grad_X_G(self, X: NDArray) -> NDArray:
        """Gradient of G"""

    @abc.abstractmethod
    def initial_state(self) -> NDArray:
        """X_0"""

    @abc.abstractmethod
    def grad_v_Xi(self, t: float, v, X: NDArray, Y: NDArray) -> NDArray:
        """Gradient in v of xi(t, v, X, Y), for the pairing `dot` at state X."""

    # <~~UPDATE MAP~~>
    def delta(self, t: float, v_new, v, X: NDArray, Y: NDArray) -> NDArray:
        """Increment factor used by the solvers. Problems may override with an exact form."""
        return delta_generic(self, v_new, v, t, X, Y, nodes=self.quadrature_nodes)

    def closed_form_vtheta(self, t: float, v, X: NDArray, Y: NDArray, theta: float):
        """Explicit solution of delta(v', v) = -theta (v' - v), or None."""
        return None

    @property
    def has_closed_form(self) -> bool:
        return type(self).closed_form_vtheta is not ProblemDefinition.closed_form_vtheta

    # <~~DEFAULTS~~>
    def default_control(self) -> ControlTrajectory:
        return ControlTrajectory.constant(self.grid, 1e-3, self.control_shape)

    def random_state(self, rng: np.random.Generator) -> NDArray:
        """A random state of unit norm, for property checks."""
        x = rng.standard_normal(self.state_dim)
        if self.is_complex:
            x = x + 1j * rng.standard_normal(self.state_dim)
        return x / self.norm(x)

    def random_adjoint(self, rng: np.random.Generator) -> NDArray:
        return self.random_state(rng)

    def random_control_value(self, rng: np.random.Generator) -> NDArray:
        return self.control_scale * rng.standard_normal(self.control_shape)

    def random_control(self, rng: np.random.Generator) -> ControlTrajectory:
        shape = (self.grid.steps,) + self.control_shape
        values = self.control_scale * rng.standard_normal(shape)
        return ControlTrajectory(self.grid, values)

    def report_costs(self, v: ControlTrajectory, X: StateTrajectory) -> dict[str, float]:
        """Named cost figures for summaries."""
        total = cost(self, v, X)
        terminal = self.terminal_cost(X.final)
        return {"J": total, "terminal": terminal, "running": total - terminal}


# <~~PAIRINGS~~>
def xi(problem: ProblemDefinition, t: float, v, X: NDArray, Y: NDArray) -> float:
    """xi(v) = -<Y, A(t,v) X> + <Y, B(t,v)> + F(t,v,X)"""
    value = -problem.inner(Y, problem.apply_A(t, v, X)) + problem.running_cost(t, v, X)
    if problem.has_source:
        value += problem.inner(Y, problem.eval_B(t, v))
    return value


@lru_cache(maxsize=16)
def _gauss_legendre(nodes: int) -> tuple[NDArray, NDArray]:
    """Gauss-Legendre nodes and weights mapped onto [0, 1]"""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return _frozen(0.5 * (x + 1.0)), _frozen(0.5 * w)


def delta_generic(
    problem: ProblemDefinition,
    v_new,
    v,
    t: float,
    X: NDArray,
    Y: NDArray,
    nodes: int = DEFAULT_QUADRATURE_NODES,
) -> NDArray:
    """
    Increment factor by quadrature of grad xi along the segment [v, v_new].\n
    dot(result, v_new - v, X) == xi(v_new) - xi(v), exactly when xi is a
    polynomial of degree <= 2*nodes - 1 in v.
    """
    v = np.asarray(v, dtype=np.float64)
    v_new = np.asarray(v_new, dtype=np.float64)
    if v.shape != v_new.shape:
        raise ShapeError(f"control shapes differ: {v.shape} vs {v_new.shape}")
    lambdas, weights = _gauss_legendre(nodes)
    step = v_new - v
    total = np.zeros_like(v)
    for lam, w in zip(lambdas, weights):
        total = total + w * np.asarray(problem.grad_v_Xi(t, v + lam * step, X, Y))
    if not np.all(np.isfinite(total)):
        raise NumericError(f"non-finite increment factor at t={t}")
    return total


def upsilon(
    problem: ProblemDefinition,
    t: float,
    v,
    v_new,
    X_v: NDArray,
    Y_v: NDArray,
    X_new: NDArray,
) -> float:
    """Integrand of the increment bound; depends on X_v only through Y_v."""
    if np.shape(v) != np.shape(v_new):
        raise ShapeError(f"control shapes differ: {np.shape(v)} vs {np.shape(v_new)}")
    if np.shape(X_v) != np.shape(X_new) or np.shape(Y_v) != np.shape(X_new):
        raise ShapeError("state vectors do not share one space")
    value = -problem.inner(
        Y_v, problem.apply_A(t, v_new, X_new) - problem.apply_A(t, v, X_new)
    )
    if problem.has_source:
        value += problem.inner(Y_v, problem.eval_B(t, v_new) - problem.eval_B(t, v))
    value += problem.running_cost(t, v_new, X_new) - problem.running_cost(t, v, X_new)
    return value


# <~~TRAJECTORY HELPERS~~>
def collocation_states(problem: ProblemDefinition, X: StateTrajectory) -> NDArray:
    """X^c_n for every interval, shape (steps, dim)."""
    w = problem.scheme.collocation_weight
    return (1.0 - w) * X.states[:-1] + w * X.states[1:]


def collocation_adjoints(problem: ProblemDefinition, Y: AdjointTrajectory) -> NDArray:
    """P_n = w Y_n + (1 - w) Y_{n+1}, the adjoint paired with X^c_n."""
    w = problem.scheme.collocation_weight
    return w * Y.states[:-1] + (1.0 - w) * Y.states[1:]


def increment_field(
    problem: ProblemDefinition,
    v_new: NDArray,
    v: NDArray,
    colloc: NDArray,
    adjoints: NDArray,
) -> NDArray:
    """Per-interval increment factors delta(v_new[n], v[n]; X^c_n, P_n)."""
    grid = problem.grid
    out = np.empty(np.shape(v), dtype=np.float64)
    for n in range(grid.steps):
        out[n] = problem.delta(grid.midpoint(n), v_new[n], v[n], colloc[n], adjoints[n])
    return out


def l2_pairing(problem: ProblemDefinition, a: NDArray, b: NDArray, colloc: NDArray) -> float:
    """Time quadrature of dot(a(t), b(t)) on the control intervals."""
    dt = problem.grid.dt
    return dt * sum(problem.dot(a[n], b[n], colloc[n]) for n in range(problem.grid.steps))


def l2_norm(problem: ProblemDefinition, a: NDArray, colloc: NDArray) -> float:
    return math.sqrt(max(l2_pairing(problem, a, a, colloc), 0.0))


def check_compatible(
    problem: ProblemDefinition, v: ControlTrajectory, X: _NodeTrajectory | None = None
):
    if v.grid != problem.grid:
        raise ShapeError(f"control grid {v.grid} does not match problem grid {problem.grid}")
    if v.shape != problem.control_shape:
        raise ShapeError(f"control value shape {v.shape}, expected {problem.control_shape}")
    if X is not None:
        if X.grid != v.grid:
            raise ShapeError(f"trajectory grid {X.grid} does not match control grid {v.grid}")
        if X.states.shape[1] != problem.state_dim:
            raise ShapeError(
                f"state dimension {X.states.shape[1]}, expected {problem.state_dim}"
            )


# <~~COST FUNCTIONAL~~>
def cost(problem: ProblemDefinition, v: ControlTrajectory, X: StateTrajectory) -> float:
    """J(v): midpoint quadrature of F on the control intervals plus G(X(T))."""
    check_compatible(problem, v, X)
    grid = problem.grid
    colloc = collocation_states(problem, X)
    running = sum(
        problem.running_cost(grid.midpoint(n), v.values[n], colloc[n])
        for n in range(grid.steps)
    )
    return grid.dt * running + problem.terminal_cost(X.final)


def increment_bound_check(
    problem: ProblemDefinition, v: ControlTrajectory, v_new: ControlTrajectory
) -> tuple[float, float]:
    """
    Both sides of J(v_new) - J(v) <= int upsilon dt.\n
    Returns (lhs, rhs); callers assert lhs <= rhs + tol.
    """
    from monocontrol.propagators import propagate_adjoint, propagate_forward

    check_compatible(problem, v)
    check_compatible(problem, v_new)
    X = propagate_forward(problem, v)
    Y = propagate_adjoint(problem, v, X)
    X_new = propagate_forward(problem, v_new)
    lhs = cost(problem, v_new, X_new) - cost(problem, v, X)

    grid = problem.grid
    colloc = collocation_states(problem, X)
    colloc_new = collocation_states(problem, X_new)
    adjoints = collocation_adjoints(problem, Y)
    rhs = grid.dt * sum(
        upsilon(
            problem,
            grid.midpoint(n),
            v.values[n],
            v_new.values[n],
            colloc[n],
            adjoints[n],
            colloc_new[n],
        )
        for n in range(grid.steps)
    )
    return lhs, rhs
