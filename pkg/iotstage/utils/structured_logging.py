"""Structured JSON logging configuration."""

import contextvars
import logging
import sys
from contextlib import contextmanager
from datetime import datetime, timezone

from pythonjsonlogger import jsonlogger

_run_context = contextvars.ContextVar("iotstage_run_context", default=None)


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """Custom JSON formatter with run context."""

    def add_fields(self, log_record, record, message_dict):
        """Add custom fields to log record."""
        super().add_fields(log_record, record, message_dict)

        log_record["timestamp"] = datetime.now(timezone.utc).isoformat()
        log_record["level"] = record.levelname
        log_record["logger"] = record.name

        context = _run_context.get()
        if context:
            for key, value in context.items():
                log_record.setdefault(key, value)

        if record.exc_info:
            log_record["exception"] = self.formatException(record.exc_info)


@contextmanager
def run_context(**fields):
    """Attach scenario/run fields to every log record emitted inside the block."""
    merged = dict(_run_context.get() or {})
    merged.update(fields)
    token = _run_context.set(merged)
    try:
        yield
    finally:
        _run_context.reset(token)


def setup_json_logging(config):
    """Configure logging for the command line.

    Diagnostics always go to stderr; stdout is reserved for run summaries.
    """
    if config.LOG_FORMAT == "text":
        formatter = logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s")
    else:
        formatter = CustomJsonFormatter("%(timestamp)s %(level)s %(name)s %(message)s")

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)

    root_logger = logging.getLogger()
    for existing in list(root_logger.handlers):
        root_logger.removeHandler(existing)
    root_logger.setLevel(getattr(logging, config.LOG_LEVEL, logging.INFO))
    root_logger.addHandler(handler)

    return handler

