"""Logging configuration for novikov-lab."""

import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
DEFAULT_LOG_FILE = Path("logs") / "novikov-lab.log"
RUN_LOG_NAME = "run.log"


def _formatter() -> logging.Formatter:
    return logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)


def setup_logger(
    name: str = "novikov-lab",
    log_file: Optional[Union[str, Path]] = None,
    level: int = logging.INFO,
    log_to_console: bool = True,
    log_to_file: bool = True
) -> logging.Logger:
    """
    Set up a logger writing to stdout and to a rotating log file.

    Calling it again for a configured name returns the existing logger, so
    each CLI command can ask for its logger without stacking handlers.

    Args:
        name: Logger name (one per command: simulate, verify, ...)
        log_file: Log file path (default logs/novikov-lab.log, 10MB x 5 backups)
        level: Logging level
        log_to_console: Attach a stdout handler
        log_to_file: Attach the rotating file handler

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger
    logger.setLevel(level)

    handlers = []
    if log_to_console:
        handlers.append(logging.StreamHandler(sys.stdout))
    if log_to_file:
        path = Path(log_file) if log_file is not None else DEFAULT_LOG_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(RotatingFileHandler(path, maxBytes=10 * 1024 * 1024, backupCount=5, encoding='utf-8'))

    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(_formatter())
        logger.addHandler(handler)
    return logger


def get_logger(name: str = "novikov-lab") -> logging.Logger:
    """Return the named logger, configuring it with defaults on first use."""
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger = setup_logger(name)
    return logger


def attach_run_log(logger: logging.Logger, run_dir: Path) -> Optional[logging.Handler]:
    """
    Mirror a logger into <run_dir>/run.log for the duration of one run.

    Returns the handler to pass to detach_run_log, or None when the logger is
    not a real logging.Logger (tests pass mocks).
    """
    if not isinstance(logger, logging.Logger):
        return None
    handler = logging.FileHandler(Path(run_dir) / RUN_LOG_NAME, mode='w', encoding='utf-8')
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(_formatter())
    logger.addHandler(handler)
    return handler


def detach_run_log(logger: logging.Logger, handler: Optional[logging.Handler]):
    if handler is None:
        return
    logger.removeHandler(handler)
    handler.close()


class RunTracker:
    """Counts what happens during a simulation run and logs a summary."""

    def __init__(self, logger: logging.Logger):
        self.logger = logger
        self.steps = 0
        self.samples = 0
        self.observer_calls = 0
        self.stability_warnings = 0
        self.max_speed = 0.0

    def log_step(self, time: float, speed: float):
        """Record one accepted time step."""
        self.steps += 1
        self.max_speed = max(self.max_speed, speed)
        self.logger.debug(f"Step {self.steps}: t={time:.6g}, max|a|={speed:.4g}")

    def log_sample(self, time: float, n_observers: int):
        """Record a monitor sample and the observers it triggered."""
        self.samples += 1
        self.observer_calls += n_observers
        self.logger.debug(f"Monitor sample {self.samples} at t={time:.6g}")

    def log_stability_warning(self, dt: float, limit: float):
        """Log a violated advective stability heuristic (first few only)."""
        self.stability_warnings += 1
        if self.stability_warnings <= 3:
            self.logger.warning(
                f"dt={dt:.3g} exceeds stability heuristic {limit:.3g} "
                f"(warning {self.stability_warnings})"
            )

    def log_summary(self, termination: str):
        """Log a summary of the run."""
        self.logger.info("="*60)
        self.logger.info("Run Summary:")
        self.logger.info(f"  Termination: {termination}")
        self.logger.info(f"  Steps: {self.steps}")
        self.logger.info(f"  Monitor samples: {self.samples}")
        self.logger.info(f"  Observer calls: {self.observer_calls}")
        self.logger.info(f"  Max advection speed: {self.max_speed:.6g}")

        if self.stability_warnings > 0:
            self.logger.warning(f"  Stability heuristic violations: {self.stability_warnings}")

        self.logger.info("="*60)
