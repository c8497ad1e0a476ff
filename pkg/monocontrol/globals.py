"""Global functions and variables, used across various modules."""

import logging
import os
from datetime import datetime
from logging.handlers import RotatingFileHandler

from platformdirs import user_data_dir
from rich.console import Console

# Default directories
APP_DIR = user_data_dir("MonoControl")
LOG_DIR = os.path.join(APP_DIR, "logs")

# Problem names accepted by the CLI, in the order the selftest visits them
PROBLEM_NAMES = ("twolevel", "morse", "mfg", "co")
SOLVER_NAMES = ("monotonic", "gradient", "both")

# Header of convergence.csv, one row per iteration per solver
CONVERGENCE_HEADER = (
    "iter",
    "J",
    "update_norm",
    "theta",
    "picard_iters",
    "descent_residual",
    "solver",
)

# Exit codes
EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_FAILURE = 3

# Terminal integration
CONSOLE = Console()


def init_logger(verbose: bool = False, log_dir: str = LOG_DIR):
    """Initializes the logging system."""
    os.makedirs(log_dir, exist_ok=True)
    date_str = datetime.now().strftime("%Y%m%d")
    # Output example: monocontrol_20251109.log
    log_path = os.path.join(log_dir, f"monocontrol_{date_str}.log")
    # Max of 3 backups, max size of 1MB
    handler = RotatingFileHandler(
        log_path, maxBytes=1_000_000, backupCount=3, encoding="utf-8"
    )
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[handler],
        force=True,
    )


def log_exception(e: Exception, context: str = ""):
    """Writes the full traceback of a caught error to the log, under an optional context line"""
    import traceback

    tb = "".join(traceback.format_exception(type(e), e, e.__traceback__))
    # Solver failures carry the step or theta in their message; keep it first
    logging.error("%s\n%s", context or type(e).__name__, tb)

