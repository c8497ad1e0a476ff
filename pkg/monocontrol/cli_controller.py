"""Command logic for run, compare and selftest lives here."""

import logging
import os

from monocontrol.config import RunConfig
from monocontrol.core import ControlTrajectory, ProblemDefinition
from monocontrol.errors import ConfigError, MonoControlError
from monocontrol.globals import (
    CONSOLE,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_SELFTEST_FAILED,
    EXIT_SOLVER_FAILURE,
    log_exception,
)
from monocontrol.gradient import run_gradient
from monocontrol.monotonic import RunRecord, run
from monocontrol.output_manager import OutputManager, compare_records
from monocontrol.selftest import run_selftest
from monocontrol.ui import GlobalPanels

logger = logging.getLogger(__name__)


class CLIController:
    """Handles the three subcommands and maps failures to exit codes"""

    def __init__(self, panel: GlobalPanels):
        self.panel = panel

        # Command dict
        self.commands = {
            "run": self.cmd_run,
            "compare": self.cmd_compare,
            "selftest": self.cmd_selftest,
        }

    def handle(self, command: str, **kwargs) -> int:
        """Dispatch a subcommand, returning its exit code"""
        try:
            return self.commands[command](**kwargs)
        except ConfigError as e:
            log_exception(e, f"Configuration error in '{command}'")
            self.panel.spawn_error_panel("CONFIG ERROR", str(e))
            return EXIT_CONFIG_ERROR
        except MonoControlError as e:
            log_exception(e, f"Solver failure in '{command}'")
            self.panel.spawn_error_panel("SOLVER FAILURE", f"{type(e).__name__}: {e}")
            return EXIT_SOLVER_FAILURE

    # <~~HELPERS~~>
    def _load(self, config_path: str, out: str | None, seed: int | None) -> RunConfig:
        config = RunConfig.from_file(config_path)
        # Flags win over the file
        if out is not None:
            config.output = out
        if seed is not None:
            config.seed = seed
        config.validate()
        if config.verbose:
            logging.getLogger().setLevel(logging.INFO)
        return config

    def _solve(
        self, config: RunConfig, problem: ProblemDefinition, v0: ControlTrajectory, solver: str
    ) -> RunRecord:
        with CONSOLE.status(
            f"[bold medium_orchid]Running {solver} on {problem.name}...[/bold medium_orchid]",
            spinner="moon",
        ):
            if solver == "monotonic":
                record = run(problem, v0, config.monotonic_config(problem))
            else:
                record = run_gradient(
                    problem, v0, config.line_search_config(), max_iter=config.gradient_iterations
                )
        logger.info(
            "%s on %s finished: %s after %d iterations, J=%.10e",
            solver,
            problem.name,
            record.status.value,
            record.iterations,
            record.final_cost,
        )
        self.panel.spawn_summary_panel(record)
        return record

    def _write(self, config: RunConfig, problem: ProblemDefinition, records: list[RunRecord]):
        output = OutputManager(config.output)
        paths = [
            output.write_convergence(records),
            output.write_final_control(problem, records),
            output.write_summary(
                problem, records, config.report_both_costs, config.initial_noise, config.seed
            ),
        ]
        return output, paths

    # <~~COMMANDS~~>
    def cmd_run(
        self, config_path: str, out: str | None = None, seed: int | None = None
    ) -> int:
        """Run the configured solver(s) and write result files"""
        config = self._load(config_path, out, seed)
        problem = config.build_problem()
        out_dir = os.path.abspath(config.output)
        self.panel.spawn_intro_panel(problem, config.solver, config.source, out_dir)
        solvers = ["monotonic", "gradient"] if config.solver == "both" else [config.solver]
        # both solvers start from the same control
        v0 = config.initial_control(problem)
        records = [self._solve(config, problem, v0, solver) for solver in solvers]
        _, paths = self._write(config, problem, records)
        self.panel.spawn_written_files(paths)
        return EXIT_OK

    def cmd_compare(
        self, config_path: str, out: str | None = None, seed: int | None = None
    ) -> int:
        """Run both solvers from the same initial control and report which does better"""
        config = self._load(config_path, out, seed)
        problem = config.build_problem()
        out_dir = os.path.abspath(config.output)
        self.panel.spawn_intro_panel(problem, "monotonic vs gradient", config.source, out_dir)
        v0 = config.initial_control(problem)
        records = [
            self._solve(config, problem, v0, solver) for solver in ("monotonic", "gradient")
        ]
        output, paths = self._write(config, problem, records)
        report = compare_records(*records)
        paths.append(output.write_compare(report))
        self.panel.spawn_compare_panel(report)
        self.panel.spawn_written_files(paths)
        return EXIT_OK

    def cmd_selftest(self, seed: int | None = None) -> int:
        """Run the invariant suite on reduced problems"""
        with CONSOLE.status(
            "[bold medium_orchid]Running invariant suite...[/bold medium_orchid]",
            spinner="moon",
        ):
            results = run_selftest(seed or 0)
        self.panel.spawn_selftest_table(results)
        return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST_FAILED
