"""Handles run configuration files."""

import dataclasses
import math
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from monocontrol.core import ControlTrajectory, ProblemDefinition
from monocontrol.errors import ConfigError, ProblemConstructionError
from monocontrol.globals import PROBLEM_NAMES, SOLVER_NAMES
from monocontrol.gradient import LineSearchConfig
from monocontrol.monotonic import MonotonicConfig
from monocontrol.problems import PARAMS_TYPES, build_problem

SECTIONS = ("run", "grid", "problem", "monotonic", "line_search")


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(section: str, data: dict, allowed: set[str]):
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _is_int(value) -> bool:
    # TOML booleans arrive as bool, a subclass of int
    return isinstance(value, int) and not isinstance(value, bool)


class RunConfig:
    """Run configuration variables"""

    def __init__(self):
        # Default values
        self.problem: str = "twolevel"
        self.solver: str = "monotonic"
        self.iterations: int = 100
        self.seed: int = 0
        self.initial_noise: float = 0.0
        self.output: str = "results"
        self.report_both_costs: bool = True
        self.verbose: bool = False
        self.space_points: int | None = None
        self.time_steps: int | None = None
        # Per-section overrides, validated against the target dataclass
        self.problem_overrides: dict = {}
        self.monotonic_overrides: dict = {}
        self.line_search_overrides: dict = {}
        self.source: str = ""

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        config = cls()
        config.load(path)
        return config

    def load(self, path: str):
        """Loads a TOML run configuration."""
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
            raise ConfigError(f"could not parse {path}: {e}") from e
        self.source = path
        self.apply(data)

    def apply(self, data: dict):
        """Applies parsed sections on top of the defaults."""
        _check_keys("top level", data, set(SECTIONS))
        for section in SECTIONS:
            if not isinstance(data.get(section, {}), dict):
                raise ConfigError(f"[{section}] must be a table")

        run = data.get("run", {})
        _check_keys(
            "run",
            run,
            {
                "problem",
                "solver",
                "iterations",
                "seed",
                "initial_noise",
                "output",
                "report_both_costs",
                "verbose",
            },
        )
        for key, val in run.items():
            setattr(self, key, val)

        grid = data.get("grid", {})
        _check_keys("grid", grid, {"space_points", "time_steps"})
        for key, val in grid.items():
            setattr(self, key, val)

        self.validate()
        self.problem_overrides = dict(data.get("problem", {}))
        _check_keys("problem", self.problem_overrides, _field_names(PARAMS_TYPES[self.problem]))
        self.monotonic_overrides = dict(data.get("monotonic", {}))
        _check_keys("monotonic", self.monotonic_overrides, _field_names(MonotonicConfig))
        self.line_search_overrides = dict(data.get("line_search", {}))
        _check_keys("line_search", self.line_search_overrides, _field_names(LineSearchConfig))

    def validate(self):
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(
                f"unknown problem '{self.problem}', expected one of {', '.join(PROBLEM_NAMES)}"
            )
        if self.solver not in SOLVER_NAMES:
            raise ConfigError(
                f"unknown solver '{self.solver}', expected one of {', '.join(SOLVER_NAMES)}"
            )
        if not _is_int(self.iterations) or self.iterations < 1:
            raise ConfigError(f"iterations must be a positive integer, got {self.iterations}")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        noise = self.initial_noise
        if isinstance(noise, bool) or not isinstance(noise, (int, float)):
            raise ConfigError(f"initial_noise must be a number, got {noise!r}")
        if not (math.isfinite(noise) and noise >= 0):
            raise ConfigError(f"initial_noise must be finite and nonnegative, got {noise}")
        if not isinstance(self.output, str) or not self.output:
            raise ConfigError(f"output must be a directory path, got {self.output!r}")
        for name in ("report_both_costs", "verbose"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name} must be true or false, got {getattr(self, name)!r}")
        for name in ("space_points", "time_steps"):
            value = getattr(self, name)
            if value is not None and (not _is_int(value) or value < 1):
                raise ConfigError(f"{name} must be a positive integer, got {value}")

    def build_problem(self) -> ProblemDefinition:
        """Builds the configured problem with its parameter overrides."""
        try:
            params = PARAMS_TYPES[self.problem](**self.problem_overrides)
            return build_problem(self.problem, params, self.space_points, self.time_steps)
        except (TypeError, ProblemConstructionError) as e:
            raise ConfigError(f"invalid [problem] settings for {self.problem}: {e}") from e

    def initial_control(self, problem: ProblemDefinition) -> ControlTrajectory:
        """The problem's default control plus seeded Gaussian noise of size initial_noise."""
        v0 = problem.default_control()
        if self.initial_noise == 0:
            return v0
        rng = np.random.default_rng(self.seed)
        return v0.replace(v0.values + self.initial_noise * rng.standard_normal(v0.values.shape))

    def monotonic_config(self, problem: ProblemDefinition) -> MonotonicConfig:
        """Problem-seeded theta, [run] iterations as the cap, then [monotonic] overrides."""
        values = {"theta_init": problem.default_theta, "outer_max": self.iterations}
        values.update(self.monotonic_overrides)
        try:
            return MonotonicConfig(**values)
        except TypeError as e:
            raise ConfigError(f"invalid [monotonic] settings: {e}") from e

    def line_search_config(self) -> LineSearchConfig:
        try:
            return LineSearchConfig(**self.line_search_overrides)
        except TypeError as e:
            raise ConfigError(f"invalid [line_search] settings: {e}") from e

    @property
    def gradient_iterations(self) -> int:
        """Gradient budget; follows [monotonic] outer_max when set so compared runs match."""
        return int(self.monotonic_overrides.get("outer_max", self.iterations))
