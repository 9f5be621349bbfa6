"""Logging handlers for lexseq."""

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .types import LogLevel
from .utils import ensure_dir


class JSONFormatter(logging.Formatter):
    """JSON log formatter with structured output."""

    def __init__(self, run_id: str, command: str):
        """Initialize JSON formatter.

        Args:
            run_id: Unique run identifier.
            command: CLI subcommand being run.
        """
        super().__init__()
        self.run_id = run_id
        self.command = command

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON.

        Args:
            record: Log record to format.

        Returns:
            JSON formatted log string.
        """
        log_data: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
            "message": record.getMessage(),
            "run_id": self.run_id,
            "command": self.command,
        }

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        # structured fields passed as extra={"extra": {...}}
        if hasattr(record, "extra"):
            log_data.update(record.extra)

        return json.dumps(log_data, ensure_ascii=False, default=str)


def setup_logging(
    log_level: LogLevel = LogLevel.INFO,
    log_format: str = "json",
    log_file: str | None = None,
    run_id: str = "",
    command: str = "",
) -> logging.Logger:
    """Setup logging with an optional file handler and a stderr console handler.

    stdout is left to command output (JSON lines, TSV).

    Args:
        log_level: Console level; the file always records DEBUG.
        log_format: ``json`` or ``text``.
        log_file: Path to log file; None disables file logging.
        run_id: Run identifier stamped on JSON records.
        command: Subcommand stamped on JSON records.

    Returns:
        Configured root logger.
    """
    logger = logging.getLogger()
    level = getattr(logging, LogLevel(log_level).value)
    logger.setLevel(logging.DEBUG if log_file else level)

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter: logging.Formatter
    if log_format == "json":
        formatter = JSONFormatter(run_id=run_id, command=command)
    else:
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
        )

    if log_file:
        ensure_dir(str(Path(log_file).parent))
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger
