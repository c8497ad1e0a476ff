"""
Shipped control problems: the Morse oscillator, the mean-field crowd model,
molecular orientation and a two-level toy system.

All parameter defaults are the published values; every field can be overridden
from a run configuration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
from numpy.typing import NDArray

from monocontrol.core import (
    ControlKind,
    ControlTrajectory,
    ProblemDefinition,
    SchemeTag,
    StateTrajectory,
    TimeGrid,
    cost,
)
from monocontrol.errors import ProblemConstructionError

logger = logging.getLogger(__name__)


def _require_positive(params, *names: str):
    for name in names:
        value = getattr(params, name)
        if not (math.isfinite(value) and value > 0):
            raise ProblemConstructionError(f"{name} must be positive, got {value}")


# <~~QUANTUM (BILINEAR) FAMILY~~>
class BilinearQuantumProblem(ProblemDefinition):
    """
    A(t, v) = i (H0 - v mu), B = 0, F = alpha v^2 for a scalar control.\n
    Subclasses supply the Hamiltonian, the dipole, X0 and the terminal cost.
    """

    scheme = SchemeTag.CRANK_NICOLSON_UNITARY
    control_kind = ControlKind.SCALAR

    def __init__(
        self,
        grid: TimeGrid,
        hamiltonian: sparse.spmatrix,
        dipole: sparse.spmatrix,
        alpha: float,
        weight: float = 1.0,
    ):
        super().__init__(grid, hamiltonian.shape[0], weight=weight, is_complex=True)
        self.alpha = alpha
        self._free = (1j * sparse.csr_matrix(hamiltonian)).astype(np.complex128)
        self._coupling = (1j * sparse.csr_matrix(dipole)).astype(np.complex128)

    def operator(self, t, v):
        return self._free - float(v) * self._coupling

    def running_cost(self, t, v, X):
        return self.alpha * float(v) ** 2

    def grad_X_F(self, t, v, X):
        return np.zeros(self.state_dim, dtype=np.complex128)

    def dipole_coupling(self, X: NDArray, Y: NDArray) -> float:
        """Re<Y, i mu X>"""
        return self.inner(Y, self._coupling @ X)

    def grad_v_Xi(self, t, v, X, Y):
        return np.asarray(self.dipole_coupling(X, Y) + 2.0 * self.alpha * float(v))

    def delta(self, t, v_new, v, X, Y):
        return np.asarray(self.dipole_coupling(X, Y) + self.alpha * (float(v_new) + float(v)))

    def closed_form_vtheta(self, t, v, X, Y, theta):
        v = float(v)
        return np.asarray(
            ((theta - self.alpha) * v - self.dipole_coupling(X, Y)) / (theta + self.alpha)
        )


# <~~MORSE~~>
@dataclass(frozen=True)
class MorseParams:
    well_depth: float = 0.1994
    well_stiffness: float = 1.189
    equilibrium: float = 1.821
    dipole_decay: float = 0.6
    target_center: float = 2.5
    target_sharpness: float = 25.0
    dipole_strength: float = 3.088
    kinetic: float = 2.8694e-4
    horizon: float = 131000.0
    alpha: float = 1.0
    theta: float = 1e-2
    z_min: float = 0.5
    z_max: float = 8.0
    initial_control: float = 1e-3


class MorseProblem(BilinearQuantumProblem):
    """Vibrational excitation of a Morse oscillator, Dirichlet box in the bond length."""

    name = "morse"
    control_scale = 1e-2

    def __init__(self, params: MorseParams, grid_points: int, steps: int):
        _require_positive(
            params,
            "well_depth",
            "well_stiffness",
            "equilibrium",
            "dipole_decay",
            "target_center",
            "target_sharpness",
            "dipole_strength",
            "kinetic",
            "horizon",
            "alpha",
            "theta",
        )
        if grid_points < 64:
            raise ProblemConstructionError(
                f"morse needs at least 64 grid points, got {grid_points}"
            )
        if params.z_max <= params.z_min:
            raise ProblemConstructionError("z_max must exceed z_min")
        self.params = params
        self.default_theta = params.theta
        self.spacing = (params.z_max - params.z_min) / (grid_points + 1)
        self.z = params.z_min + self.spacing * np.arange(1, grid_points + 1)

        self.potential = self.morse_potential(self.z)
        off = -params.kinetic / self.spacing**2
        self._diagonal = 2.0 * params.kinetic / self.spacing**2 + self.potential
        hamiltonian = sparse.diags(
            [np.full(grid_points - 1, off), self._diagonal, np.full(grid_points - 1, off)],
            [-1, 0, 1],
            format="csr",
        )
        self.dipole = params.dipole_strength * self.z * np.exp(-self.z / params.dipole_decay)
        self.observable = (
            params.target_sharpness
            / math.sqrt(math.pi)
            * np.exp(-(params.target_sharpness**2) * (self.z - params.target_center) ** 2)
        )
        super().__init__(
            TimeGrid(params.horizon, steps),
            hamiltonian,
            sparse.diags(self.dipole, format="csr"),
            params.alpha,
            weight=self.spacing,
        )
        self.ground_energy, self._ground = self._ground_state(off)

    def morse_potential(self, z: NDArray) -> NDArray:
        p = self.params
        well = np.exp(-p.well_stiffness * (z - p.equilibrium)) - 1.0
        return p.well_depth * well**2 - p.well_depth

    def _ground_state(self, off: float) -> tuple[float, NDArray]:
        try:
            energies, vectors = scipy.linalg.eigh_tridiagonal(
                self._diagonal,
                np.full(self._diagonal.size - 1, off),
                select="i",
                select_range=(0, 0),
            )
        except (np.linalg.LinAlgError, ValueError) as e:
            raise ProblemConstructionError(f"ground state diagonalization failed: {e}") from e
        psi = vectors[:, 0].astype(np.complex128)
        psi /= self.norm(psi)
        if psi.real.sum() < 0:
            psi = -psi
        psi.setflags(write=False)
        return float(energies[0]), psi

    def initial_state(self):
        return self._ground.copy()

    def terminal_cost(self, X):
        return -self.inner(X, self.observable * X)

    def grad_X_G(self, X):
        return -2.0 * self.observable * X

    def default_control(self):
        return ControlTrajectory.constant(self.grid, self.params.initial_control)

    def report_costs(self, v, X):
        figures = super().report_costs(v, X)
        # the maximized yield <X(T), O X(T)>
        figures["target_yield"] = -figures["terminal"]
        return figures


def build_morse(
    params: MorseParams | None = None, grid_points: int = 512, steps: int = 4000
) -> MorseProblem:
    return MorseProblem(params or MorseParams(), grid_points, steps)


# <~~TWO-LEVEL~~>
@dataclass(frozen=True)
class TwoLevelParams:
    gap: float = 1.0
    coupling: float = 1.0
    alpha: float = 1.0
    horizon: float = 5.0
    theta: float = 10.0
    initial_control: float = 1e-3


class TwoLevelProblem(BilinearQuantumProblem):
    """Population transfer |0> -> |1> in a two-level system."""

    name = "twolevel"

    def __init__(self, params: TwoLevelParams, steps: int, scheme: SchemeTag | None = None):
        _require_positive(params, "gap", "horizon", "theta")
        if params.alpha < 0:
            raise ProblemConstructionError(f"alpha must be nonnegative, got {params.alpha}")
        self.params = params
        self.default_theta = params.theta
        if scheme is not None:
            self.scheme = scheme
        hamiltonian = sparse.csr_matrix(np.diag([0.0, params.gap]))
        dipole = sparse.csr_matrix(params.coupling * np.array([[0.0, 1.0], [1.0, 0.0]]))
        super().__init__(TimeGrid(params.horizon, steps), hamiltonian, dipole, params.alpha)
        self.target = np.array([0.0, 1.0], dtype=np.complex128)
        self.target.setflags(write=False)

    def initial_state(self):
        return np.array([1.0, 0.0], dtype=np.complex128)

    def terminal_cost(self, X):
        # equals |X - target|^2 on the unit sphere, concave everywhere
        return 2.0 - 2.0 * self.inner(X, self.target)

    def grad_X_G(self, X):
        return -2.0 * self.target

    def distance_cost(self, X: NDArray) -> float:
        """|X - target|^2"""
        diff = X - self.target
        return self.inner(diff, diff)

    def default_control(self):
        return ControlTrajectory.constant(self.grid, self.params.initial_control)

    def report_costs(self, v, X):
        figures = super().report_costs(v, X)
        figures["distance"] = self.distance_cost(X.final)
        return figures


def build_twolevel(
    params: TwoLevelParams | None = None, steps: int = 256, scheme: SchemeTag | None = None
) -> TwoLevelProblem:
    return TwoLevelProblem(params or TwoLevelParams(), steps, scheme)


# <~~MEAN-FIELD CROWD~~>
@dataclass(frozen=True)
class MfgParams:
    price: float = 1.0
    price_slope: float = 0.8
    crowd_scale: float = 1.0
    crowd_offset: float = 0.1
    crowd_rate: float = 1.0
    horizon: float = 1.0
    diffusion: float = 0.1
    theta: float = 1.0
    initial_density: float = 1.0


class MfgProblem(ProblemDefinition):
    """
    Controlled Fokker-Planck density on [0, 1] with no-flux ends.\n
    Cell-centred grid. Diffusion uses the Neumann 3-point Laplacian and advection the
    centered flux with reflective ghost cells, so every column of A sums to zero
    and mass is conserved exactly.
    """

    name = "mfg"
    scheme = SchemeTag.IMPLICIT_PARABOLIC
    control_kind = ControlKind.FIELD
    control_scale = 0.5

    def __init__(self, params: MfgParams, cells: int, steps: int):
        _require_positive(
            params,
            "price",
            "price_slope",
            "crowd_scale",
            "crowd_offset",
            "crowd_rate",
            "horizon",
            "diffusion",
            "theta",
            "initial_density",
        )
        if cells < 32:
            raise ProblemConstructionError(f"mfg needs at least 32 grid points, got {cells}")
        self.params = params
        self.default_theta = params.theta
        self.spacing = 1.0 / cells
        super().__init__(
            TimeGrid(params.horizon, steps), cells, weight=self.spacing, is_complex=False
        )
        self.z = (np.arange(cells) + 0.5) * self.spacing

        main = np.full(cells, -2.0)
        main[[0, -1]] = -1.0
        self.laplacian = sparse.diags(
            [np.ones(cells - 1), main, np.ones(cells - 1)], [-1, 0, 1], format="csr"
        ) / self.spacing**2

        half = 1.0 / (2.0 * self.spacing)
        edge = np.zeros(cells)
        edge[0], edge[-1] = half, -half
        self.divergence = sparse.diags(
            [np.full(cells - 1, -half), edge, np.full(cells - 1, half)], [-1, 0, 1], format="csr"
        )
        self.positivity_bound = 2.0 * params.diffusion / self.spacing
        self._diffusion = (-params.diffusion * self.laplacian).tocsr()
        self._price_term = params.price * (1.0 - params.price_slope * self.z)

    # <~~SPACES~~>
    def dot(self, a, b, state=None):
        """Density-weighted pairing sum a b X dz."""
        density = np.ones(self.state_dim) if state is None else np.asarray(state)
        return float(np.sum(np.asarray(a) * np.asarray(b) * density) * self.spacing)

    def mass(self, X: NDArray) -> float:
        return float(np.sum(X) * self.spacing)

    # <~~DYNAMICS~~>
    def operator(self, t, v):
        return self._diffusion + self.divergence @ sparse.diags(np.asarray(v, dtype=np.float64))

    def validate_control(self, v):
        peak = float(np.max(np.abs(v.values)))
        if peak > self.positivity_bound:
            logger.warning(
                "advection %.3e exceeds the positivity bound %.3e; density may turn negative",
                peak,
                self.positivity_bound,
            )

    # <~~COST~~>
    def running_cost(self, t, v, X):
        X = np.asarray(X, dtype=np.float64)
        if np.any(X < 0):
            logger.warning("negative density %.3e in running cost at t=%.4f", float(X.min()), t)
        p = self.params
        crowd = p.crowd_scale * self.z * X / (p.crowd_offset + p.crowd_rate * X)
        v = np.asarray(v, dtype=np.float64)
        return float(np.sum(self._price_term * X + crowd + 0.5 * v**2 * X) * self.spacing)

    def grad_X_F(self, t, v, X):
        p = self.params
        X = np.asarray(X, dtype=np.float64)
        crowd = p.crowd_scale * self.z * p.crowd_offset / (p.crowd_offset + p.crowd_rate * X) ** 2
        return self._price_term + crowd + 0.5 * np.asarray(v, dtype=np.float64) ** 2

    def terminal_cost(self, X):
        return 0.0

    def grad_X_G(self, X):
        return np.zeros(self.state_dim)

    def initial_state(self):
        return np.full(self.state_dim, self.params.initial_density)

    def adjoint_gradient(self, Y: NDArray) -> NDArray:
        """Centered spatial gradient of Y, the transpose of minus the divergence."""
        return -(self.divergence.T @ Y)

    def grad_v_Xi(self, t, v, X, Y):
        return self.adjoint_gradient(Y) + np.asarray(v, dtype=np.float64)

    def delta(self, t, v_new, v, X, Y):
        return self.adjoint_gradient(Y) + 0.5 * (np.asarray(v_new) + np.asarray(v))

    def closed_form_vtheta(self, t, v, X, Y, theta):
        return ((theta - 0.5) * np.asarray(v) - self.adjoint_gradient(Y)) / (theta + 0.5)

    # <~~DEFAULTS~~>
    def default_control(self):
        return ControlTrajectory.constant(self.grid, 0.0, self.control_shape)

    def random_state(self, rng):
        return self.params.initial_density * rng.uniform(0.5, 1.5, self.state_dim)

    def random_adjoint(self, rng):
        return rng.standard_normal(self.state_dim)

    def report_costs(self, v: ControlTrajectory, X: StateTrajectory):
        figures = super().report_costs(v, X)
        figures["mass_drift"] = self.mass(X.final) - self.mass(X[0])
        return figures


def build_mfg(
    params: MfgParams | None = None, grid_points: int = 64, steps: int = 100
) -> MfgProblem:
    return MfgProblem(params or MfgParams(), grid_points, steps)


# <~~MOLECULAR ORIENTATION~~>
@dataclass(frozen=True)
class CoParams:
    rotational_constant: float = 1.93
    polarizability_perp: float = 11.73
    polarizability_par: float = 15.65
    hyperpolarizability_par: float = 28.35
    hyperpolarizability_perp: float = 6.64
    periods: float = 20.0
    alpha: float = 0.1
    theta: float = 1e3
    basis_size: int = 12
    include_rotational_constant: bool = True
    # A depends on v only through v1^2 and v1^2 v2, so v = 0 is critical for every state
    initial_control: float = 0.5

    @property
    def horizon(self) -> float:
        """periods * pi / B"""
        return self.periods * math.pi / self.rotational_constant


class CoProblem(ProblemDefinition):
    """
    Rigid rotor driven by two field components through polarizability and
    hyperpolarizability. A(t, v) = i [H0 + (v1^2 + v2^2) mu1 + v1^2 v2 mu2].
    """

    name = "co"
    scheme = SchemeTag.CRANK_NICOLSON_UNITARY
    control_kind = ControlKind.PAIR
    control_scale = 0.1

    def __init__(self, params: CoParams, steps: int):
        _require_positive(
            params,
            "rotational_constant",
            "polarizability_perp",
            "polarizability_par",
            "hyperpolarizability_par",
            "hyperpolarizability_perp",
            "periods",
            "alpha",
            "theta",
        )
        size = int(params.basis_size)
        if size < 4:
            raise ProblemConstructionError(f"co needs a basis of at least 4 states, got {size}")
        self.params = params
        self.default_theta = params.theta
        super().__init__(TimeGrid(params.horizon, steps), size, weight=1.0, is_complex=True)

        k = np.arange(size)
        scale = params.rotational_constant if params.include_rotational_constant else 1.0
        self.hamiltonian = np.diag(scale * k * (k + 1)).astype(np.float64)
        j = k[:-1]
        off = (j + 1) / np.sqrt((2 * j + 1) * (2 * j + 3))
        self.cosine = np.diag(off, 1) + np.diag(off, -1)
        cos2 = self.cosine @ self.cosine
        cos3 = cos2 @ self.cosine
        identity = np.eye(size)
        polarizability = 0.5 * (
            params.polarizability_par * cos2 + params.polarizability_perp * (identity - cos2)
        )
        hyper = (
            (params.hyperpolarizability_par - 3.0 * params.hyperpolarizability_perp) * cos3
            + 3.0 * params.hyperpolarizability_perp * self.cosine
        ) / 6.0
        self.mu_quadratic = -0.5 * polarizability
        self.mu_cubic = -0.75 * hyper
        self._orientation = identity + self.cosine
        for matrix in (self.hamiltonian, self.cosine, self.mu_quadratic, self.mu_cubic):
            if not np.allclose(matrix, matrix.T):
                raise ProblemConstructionError("rotor matrices must be symmetric")
            matrix.setflags(write=False)

    def operator(self, t, v):
        v1, v2 = (float(c) for c in v)
        total = self.hamiltonian + (v1**2 + v2**2) * self.mu_quadratic + v1**2 * v2 * self.mu_cubic
        return sparse.csr_matrix(1j * total)

    def running_cost(self, t, v, X):
        return self.params.alpha * float(np.sum(np.asarray(v) ** 2))

    def grad_X_F(self, t, v, X):
        return np.zeros(self.state_dim, dtype=np.complex128)

    def terminal_cost(self, X):
        # equals -<X, cos X> on the unit sphere, concave everywhere
        return 1.0 - self.inner(X, self._orientation @ X)

    def grad_X_G(self, X):
        return -2.0 * (self._orientation @ X)

    def orientation(self, X: NDArray) -> float:
        """<cos gamma> in state X"""
        return self.inner(X, self.cosine @ X)

    def initial_state(self):
        X = np.zeros(self.state_dim, dtype=np.complex128)
        X[0] = 1.0
        return X

    def xi_coefficients(self, X: NDArray, Y: NDArray) -> tuple[float, float]:
        """Coefficients of |v|^2 and v1^2 v2 in xi."""
        xi1 = -self.inner(Y, 1j * (self.mu_quadratic @ X)) + self.params.alpha
        xi2 = -self.inner(Y, 1j * (self.mu_cubic @ X))
        return xi1, xi2

    def grad_v_Xi(self, t, v, X, Y):
        xi1, xi2 = self.xi_coefficients(X, Y)
        v1, v2 = (float(c) for c in v)
        return np.array([2 * xi1 * v1 + 2 * xi2 * v1 * v2, 2 * xi1 * v2 + xi2 * v1**2])

    def delta(self, t, v_new, v, X, Y):
        xi1, xi2 = self.xi_coefficients(X, Y)
        v1, v2 = (float(c) for c in v)
        w1, w2 = (float(c) for c in v_new)
        return np.array([xi1 * (v1 + w1) + xi2 * (v1 + w1) * w2, xi1 * (v2 + w2) + xi2 * v1**2])

    def default_control(self):
        return ControlTrajectory.constant(self.grid, self.params.initial_control, (2,))

    def report_costs(self, v, X):
        figures = super().report_costs(v, X)
        figures["orientation"] = self.orientation(X.final)
        return figures


def build_co(params: CoParams | None = None, steps: int = 2000) -> CoProblem:
    return CoProblem(params or CoParams(), steps)


# <~~REGISTRY~~>
PARAMS_TYPES = {
    "twolevel": TwoLevelParams,
    "morse": MorseParams,
    "mfg": MfgParams,
    "co": CoParams,
}

# (space points, time steps) used when a configuration leaves them out
DEFAULT_SIZES = {
    "twolevel": (None, 256),
    "morse": (512, 4000),
    "mfg": (64, 100),
    "co": (None, 2000),
}


def build_problem(
    name: str,
    params=None,
    space_points: int | None = None,
    time_steps: int | None = None,
) -> ProblemDefinition:
    """Build a shipped problem by name, filling in default sizes."""
    if name not in PARAMS_TYPES:
        raise ProblemConstructionError(
            f"unknown problem '{name}', expected one of {', '.join(PARAMS_TYPES)}"
        )
    default_space, default_steps = DEFAULT_SIZES[name]
    steps = time_steps or default_steps
    space = space_points or default_space
    match name:
        case "twolevel":
            return build_twolevel(params, steps)
        case "morse":
            return build_morse(params, space, steps)
        case "mfg":
            return build_mfg(params, space, steps)
        case _:
            return build_co(params, steps)
