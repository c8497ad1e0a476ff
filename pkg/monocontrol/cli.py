"""
MonoControl command line.

Usage:
    monocontrol run <config.toml> [--out DIR] [--seed N] [--verbose]
    monocontrol compare <config.toml> [--out DIR] [--seed N] [--verbose]
    monocontrol selftest [--seed N] [--verbose]
"""

import argparse
import sys

from monocontrol import __version__
from monocontrol.cli_controller import CLIController
from monocontrol.globals import CONSOLE, EXIT_SOLVER_FAILURE, init_logger, log_exception
from monocontrol.ui import GlobalPanels, UIConstructor


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monocontrol",
        description="Monotonic and gradient solvers for state-concave optimal control problems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    # Shared flags, accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="random seed")
    common.add_argument("--verbose", action="store_true", help="log at INFO level")
    outputs = argparse.ArgumentParser(add_help=False)
    outputs.add_argument("--out", default=None, help="output directory (overrides [run] output)")

    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common, outputs], help="run the configured solver(s)")
    run.add_argument("config", help="TOML run configuration")
    compare = sub.add_parser(
        "compare", parents=[common, outputs], help="run both solvers and compare them"
    )
    compare.add_argument("config", help="TOML run configuration")
    sub.add_parser("selftest", parents=[common], help="run the invariant suite")
    return parser


# <~~CONTROLLER~~>
class App:
    """Main controller, puts together the pieces and dispatches the command"""

    def __init__(self):
        self.ui = UIConstructor()
        self.panel = GlobalPanels(self.ui)
        self.commands = CLIController(self.panel)

    def run(self, args: argparse.Namespace) -> int:
        """The app runner"""
        if args.command == "selftest":
            return self.commands.handle("selftest", seed=args.seed)
        return self.commands.handle(
            args.command, config_path=args.config, out=args.out, seed=args.seed
        )


# <~~MAIN FLOW~~>
def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        init_logger(verbose=args.verbose)
        return App().run(args)
    except KeyboardInterrupt:
        CONSOLE.print("[yellow]Interrupted.[/yellow]")
        return EXIT_SOLVER_FAILURE
    except Exception as e:
        log_exception(e, "Unhandled error")  # Log any critical errors
        CONSOLE.print(f"[bold][red]CRITICAL ERROR:[/red][/bold] {e}")
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
