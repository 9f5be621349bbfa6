"""Run tracking: logging setup, run ids and a summary file per CLI run."""

import functools
import logging
import traceback
from collections.abc import Callable
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, TypeVar

from pydantic import BaseModel, Field

from .handlers import setup_logging
from .types import RunConfig
from .utils import ensure_dir, format_duration, generate_run_id, get_log_file_path

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"

F = TypeVar("F", bound=Callable[..., Any])


class RunSummary(BaseModel):
    """Outcome of one CLI run, written as ``summary.json``."""

    command: str
    run_id: str
    start_time: datetime
    end_time: datetime
    duration_seconds: float
    success: bool
    exit_code: int = 0
    error_message: str | None = None
    stacktrace: str | None = None
    log_file: str | None = None
    details: dict[str, Any] = Field(default_factory=dict)


class RunState:
    """Holds tracking state for the current run."""

    def __init__(self, command: str, config: RunConfig, run_id: str, log_file: str | None):
        self.command = command
        self.config = config
        self.run_id = run_id
        self.log_file = log_file
        self.start_time = datetime.now()
        self.details: dict[str, Any] = {}
        self.summary: RunSummary | None = None

    def create_summary(
        self,
        exit_code: int = 0,
        error_message: str | None = None,
        stacktrace: str | None = None,
    ) -> RunSummary:
        """Create the run summary.

        Args:
            exit_code: Process exit code.
            error_message: Optional error message.
            stacktrace: Optional stack trace.

        Returns:
            Run summary.
        """
        end_time = datetime.now()
        summary = RunSummary(
            command=self.command,
            run_id=self.run_id,
            start_time=self.start_time,
            end_time=end_time,
            duration_seconds=(end_time - self.start_time).total_seconds(),
            success=exit_code == 0 and error_message is None,
            exit_code=exit_code,
            error_message=error_message,
            stacktrace=stacktrace,
            log_file=self.log_file,
            details=self.details,
        )
        self.summary = summary
        return summary

    def write_summary(self, summary: RunSummary) -> Path:
        path = ensure_dir(self.config.output_dir) / SUMMARY_FILE
        path.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
        return path


# Global state for the current run
_run_state: Optional[RunState] = None


def init_run(command: str, config: RunConfig, log_to_file: bool = True) -> logging.Logger:
    """Initialize logging and tracking for a CLI run.

    Args:
        command: Subcommand name; also the log sub-directory.
        config: Run configuration (log settings, output dir).
        log_to_file: Write ``<log_dir>/<command>/<run_id>.log``.

    Returns:
        Configured root logger.
    """
    global _run_state

    run_id = generate_run_id()
    log_file = get_log_file_path(command, config.log_dir, run_id) if log_to_file else None
    _run_state = RunState(command, config, run_id, log_file)
    logger_instance = setup_logging(
        config.log_level, config.log_format, log_file, run_id=run_id, command=command
    )
    logger.info(f"{command} run initialized (run_id: {run_id})")
    return logger_instance


def get_current_run() -> RunState | None:
    """Tracking state of the current run, if any."""
    return _run_state


def record(**details: Any) -> None:
    """Attach key results to the current run summary."""
    if _run_state is not None:
        _run_state.details.update(details)


def tracked(command: str, log_to_file: bool = True) -> Callable[[F], F]:
    """Decorator for a command taking a RunConfig as its first argument.

    Initializes the run, logs start and finish, and writes the summary into
    ``config.output_dir`` whether the command succeeds or raises.

    Args:
        command: Subcommand name.
        log_to_file: Passed to init_run.

    Returns:
        Decorated function.
    """

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(config: RunConfig, *args: Any, **kwargs: Any) -> Any:
            init_run(command, config, log_to_file=log_to_file)
            state = _run_state
            assert state is not None
            try:
                result = func(config, *args, **kwargs)
            except Exception as e:
                logger.critical(f"{command} failed: {e}", exc_info=True)
                summary = state.create_summary(
                    exit_code=1, error_message=str(e), stacktrace=traceback.format_exc()
                )
                state.write_summary(summary)
                raise
            summary = state.create_summary(exit_code=result if isinstance(result, int) else 0)
            state.write_summary(summary)
            logger.info(f"{command} finished in {format_duration(summary.duration_seconds)}")
            return result

        return wrapper  # type: ignore

    return decorator
