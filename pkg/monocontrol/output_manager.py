"""Result files: convergence tables, final controls, summaries and comparison reports."""

import csv
import os
from dataclasses import dataclass

from monocontrol.core import ControlKind, ProblemDefinition
from monocontrol.globals import CONVERGENCE_HEADER
from monocontrol.monotonic import RunRecord
from monocontrol.propagators import propagate_forward

# Leading iterations inspected when deciding whether gradient leads early
EARLY_WINDOW = 5


def _cell(value) -> str:
    """CSV cell: shortest round-trip repr for floats, blank for missing values"""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ComparisonReport:
    winner: str
    monotonic_final: float
    gradient_final: float
    gradient_leads_early: bool
    overtake_iteration: int | None


def compare_records(monotonic: RunRecord, gradient: RunRecord) -> ComparisonReport:
    """Which solver ended lower, and when (if ever) monotonic passed gradient."""
    mono = monotonic.cost_history()
    grad = gradient.cost_history()
    length = max(len(mono), len(grad))
    # a finished run holds its final value
    mono += [mono[-1]] * (length - len(mono))
    grad += [grad[-1]] * (length - len(grad))

    leads_early = any(grad[k] < mono[k] for k in range(1, min(EARLY_WINDOW + 1, length)))
    overtake = None
    gradient_ahead = False
    for k in range(length):
        if grad[k] < mono[k]:
            gradient_ahead = True
        elif gradient_ahead and mono[k] < grad[k]:
            overtake = k
            break

    if monotonic.final_cost < gradient.final_cost:
        winner = "monotonic"
    elif gradient.final_cost < monotonic.final_cost:
        winner = "gradient"
    else:
        winner = "tie"
    return ComparisonReport(
        winner, float(monotonic.final_cost), float(gradient.final_cost), leads_early, overtake
    )


class OutputManager:
    """Handles result-file I/O for one output directory"""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def _path(self, file_name: str) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, file_name)

    def write_convergence(self, records: list[RunRecord]) -> str:
        """One row per accepted iteration per solver"""
        path = self._path("convergence.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CONVERGENCE_HEADER)
            for record in records:
                for row in record.rows:
                    writer.writerow(
                        [
                            _cell(row.k),
                            _cell(float(row.cost)),
                            _cell(float(row.update_norm)),
                            _cell(None if row.theta is None else float(row.theta)),
                            _cell(row.picard_iters),
                            _cell(
                                None
                                if row.descent_residual is None
                                else float(row.descent_residual)
                            ),
                            record.solver,
                        ]
                    )
        return path

    def write_final_control(self, problem: ProblemDefinition, records: list[RunRecord]) -> str:
        """
        Final controls at interval midpoints.\n
        Scalar and pair controls get one column per component and solver; field
        controls get one row per time and solver with one column per grid point.
        """
        path = self._path("final_control.csv")
        times = problem.grid.midpoints()
        kept = [r for r in records if r.final_control is not None]
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            if problem.control_kind is ControlKind.FIELD:
                writer.writerow(
                    ["solver", "time"] + [f"z{i}" for i in range(problem.state_dim)]
                )
                for record in kept:
                    for t, value in zip(times, record.final_control.values):
                        writer.writerow(
                            [record.solver, _cell(float(t))] + [_cell(float(x)) for x in value]
                        )
                return path

            components = 1 if problem.control_kind is ControlKind.SCALAR else 2
            header = ["time"]
            for record in kept:
                if components == 1:
                    header.append(record.solver)
                else:
                    header.extend(f"{record.solver}_v{c + 1}" for c in range(components))
            writer.writerow(header)
            for n, t in enumerate(times):
                row = [_cell(float(t))]
                for record in kept:
                    value = record.final_control.values[n]
                    row.extend(_cell(float(x)) for x in value.reshape(-1))
                writer.writerow(row)
        return path

    def write_summary(
        self,
        problem: ProblemDefinition,
        records: list[RunRecord],
        both_costs: bool,
        initial_noise: float = 0.0,
        seed: int = 0,
    ) -> str:
        path = self._path("summary.txt")
        initial = "default"
        if initial_noise:
            initial = f"default + {float(initial_noise)!r} gaussian noise, seed {seed}"
        lines = [
            f"problem: {problem.name}",
            f"grid: {problem.grid.steps} steps over T={problem.grid.horizon!r}",
            f"initial control: {initial}",
        ]
        for record in records:
            lines.append("")
            lines.append(f"[{record.solver}]")
            lines.append(f"final J: {float(record.final_cost)!r}")
            lines.append(f"iterations: {record.iterations}")
            lines.append(f"stop reason: {record.status.value}")
            lines.append(f"cost evaluations: {record.cost_evaluations}")
            if record.final_theta is not None:
                lines.append(f"final theta: {float(record.final_theta)!r}")
            if both_costs and record.final_control is not None:
                states = propagate_forward(problem, record.final_control)
                for name, value in problem.report_costs(record.final_control, states).items():
                    if name != "J":
                        lines.append(f"{name}: {float(value)!r}")
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        return path

    def write_compare(self, report: ComparisonReport) -> str:
        path = self._path("compare.txt")
        overtake = "never" if report.overtake_iteration is None else str(report.overtake_iteration)
        lines = [
            f"lower final J: {report.winner}",
            f"monotonic final J: {report.monotonic_final!r}",
            f"gradient final J: {report.gradient_final!r}",
            "gradient leads in the first iterations: "
            + ("yes" if report.gradient_leads_early else "no"),
            f"monotonic overtakes gradient at iteration: {overtake}",
        ]
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        return path
