"""Builds and spawns UI objects. UIConstructor and GlobalPanels live here."""

from rich import box
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from monocontrol import __version__
from monocontrol.core import ProblemDefinition
from monocontrol.globals import CONSOLE, LOG_DIR
from monocontrol.monotonic import RunRecord, RunStatus
from monocontrol.output_manager import ComparisonReport
from monocontrol.selftest import CheckResult


class UIConstructor:
    """Constructs and returns various UI objects"""

    def intro_panel_constructor(
        self, problem: ProblemDefinition, solver: str, source: str, out_dir: str
    ) -> Panel:
        intro_text = Text.assemble(
            ("Problem: ", "bold sandy_brown"),
            (f"{problem.name}"),
            ("\nSolver: ", "bold sandy_brown"),
            (f"{solver}"),
            ("\nGrid: ", "bold sandy_brown"),
            (f"{problem.grid.steps} steps, T = {problem.grid.horizon:g}"),
            ("\nState dimension: ", "bold sandy_brown"),
            (f"{problem.state_dim}"),
            ("\nConfig: ", "bold sandy_brown"),
            (f"{source}", "italic"),
            ("\nOutput: ", "bold sandy_brown"),
            (f"{out_dir}"),
        )
        return Panel(
            intro_text,
            title=Text(f"MonoControl {__version__}", "bold medium_orchid"),
            title_align="left",
            border_style="medium_orchid",
            box=box.HORIZONTALS,
            padding=(0, 0),
        )

    def summary_panel_constructor(self, record: RunRecord) -> Panel:
        # Colorize the stop reason: degraded runs are still results
        status_color = {
            RunStatus.CONVERGED: "green",
            RunStatus.ITERATION_CAP: "yellow",
        }.get(record.status, "red")
        summary_text = Text.assemble(
            ("Final J: ", "bold"),
            (f"{record.final_cost:.10e}"),
            ("\nIterations: ", "bold"),
            (f"{record.iterations}"),
            ("\nStop reason: ", "bold"),
            (record.status.value, status_color),
            ("\nCost evaluations: ", "bold"),
            (f"{record.cost_evaluations}"),
        )
        if record.final_theta is not None:
            summary_text.append(f"\nFinal theta: {record.final_theta:.3e}")
        return Panel(
            summary_text,
            title=Text(f"{record.solver}", style="bold green"),
            title_align="left",
            border_style="green",
            box=box.HORIZONTALS,
            padding=(0, 0),
        )

    def compare_panel_constructor(self, report: ComparisonReport) -> Panel:
        overtake = "never" if report.overtake_iteration is None else str(report.overtake_iteration)
        compare_text = Text.assemble(
            ("Lower final J: ", "bold"),
            (report.winner, "bold cyan"),
            ("\nGradient leads early: ", "bold"),
            ("yes" if report.gradient_leads_early else "no"),
            ("\nMonotonic overtakes at iteration: ", "bold"),
            (overtake),
        )
        return Panel(
            compare_text,
            title=Text("Comparison", style="bold cyan"),
            title_align="left",
            border_style="cyan",
            box=box.HORIZONTALS,
            padding=(0, 0),
        )

    def selftest_table_constructor(self, results: list[CheckResult]) -> Table:
        table = Table(title="Invariant suite", box=box.SIMPLE_HEAVY, title_justify="left")
        table.add_column("Problem", style="bold")
        table.add_column("Check")
        table.add_column("Measure", justify="right")
        table.add_column("Threshold", justify="right", style="dim")
        table.add_column("Time", justify="right", style="dim")
        table.add_column("Result", justify="center")
        for r in results:
            table.add_row(
                r.problem,
                r.check,
                f"{r.measure:.2e}",
                f"{r.threshold:.0e}",
                f"{r.seconds:.2f}s",
                Text("PASS", "bold green") if r.passed else Text("FAIL", "bold red"),
            )
        return table

    def error_panel_constructor(self, error: str, exception: str) -> Panel:
        return Panel(
            Text.assemble(exception, (f"\nFull traceback logged under {LOG_DIR}", "dim")),
            title=Text(f"{error}", style="bold red"),
            title_align="left",
            border_style="red",
            expand=False,
        )


class GlobalPanels:
    """Global panel spawner"""

    def __init__(self, ui: UIConstructor):
        self.ui: UIConstructor = ui

    def spawn_intro_panel(
        self, problem: ProblemDefinition, solver: str, source: str, out_dir: str
    ):
        """Prints the run header."""
        CONSOLE.print(self.ui.intro_panel_constructor(problem, solver, source, out_dir))
        CONSOLE.print()

    def spawn_summary_panel(self, record: RunRecord):
        CONSOLE.print(self.ui.summary_panel_constructor(record))
        CONSOLE.print()

    def spawn_compare_panel(self, report: ComparisonReport):
        CONSOLE.print(self.ui.compare_panel_constructor(report))
        CONSOLE.print()

    def spawn_selftest_table(self, results: list[CheckResult]):
        CONSOLE.print(self.ui.selftest_table_constructor(results))
        passed = sum(r.passed for r in results)
        style = "bold green" if passed == len(results) else "bold red"
        CONSOLE.print(Text(f"{passed}/{len(results)} checks passed", style=style))
        CONSOLE.print()

    def spawn_error_panel(self, error: str, exception: str):
        """Error panel template, used by the controller and main()"""
        CONSOLE.print(self.ui.error_panel_constructor(error, exception))
        CONSOLE.print()

    def spawn_written_files(self, paths: list[str]):
        for path in paths:
            CONSOLE.print(Text.assemble(("wrote ", "dim"), (path, "cyan")))
        CONSOLE.print()
