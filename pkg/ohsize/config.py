"""Configuration helpers for ohsize."""
from __future__ import annotations

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent
ENV_PATH = BASE_DIR / ".env"

# Ensure environment variables load once.
load_dotenv(ENV_PATH)

DEFAULT_GRID_SIZE = 1000
DEFAULT_WORKERS = 1
DEFAULT_ORACLE_TIMEOUT = 60.0
DEFAULT_ORACLE_MAX_CALLS = 100_000
DEFAULT_LOG_LEVEL = "WARNING"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

_grid_size_override: Optional[int] = None
_worker_override: Optional[int] = None
_log_level_override: Optional[str] = None


class ConfigError(RuntimeError):
    """Raised when a setting is present but unusable."""

    kind = "config"
    exit_code = 2


def _positive_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _positive_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be a number, got {raw!r}") from exc
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def set_grid_size(value: Optional[int]) -> None:
    """Override the default evaluation grid size for the current process."""
    global _grid_size_override
    if value is not None and value < 1:
        raise ConfigError(f"grid size must be positive, got {value}")
    _grid_size_override = value
    grid_size.cache_clear()


def set_worker_count(value: Optional[int]) -> None:
    """Override the number of joblib workers for the current process."""
    global _worker_override
    if value is not None and value < 1:
        raise ConfigError(f"worker count must be positive, got {value}")
    _worker_override = value
    worker_count.cache_clear()


def set_log_level(value: Optional[str]) -> None:
    """Override the CLI log level for the current process."""
    global _log_level_override
    _log_level_override = value.strip().upper() if value else None
    log_level.cache_clear()


@lru_cache(maxsize=1)
def grid_size() -> int:
    if _grid_size_override:
        return _grid_size_override
    return _positive_int("OHSIZE_GRID_SIZE", DEFAULT_GRID_SIZE)


@lru_cache(maxsize=1)
def worker_count() -> int:
    if _worker_override:
        return _worker_override
    return _positive_int("OHSIZE_WORKERS", DEFAULT_WORKERS)


@lru_cache(maxsize=1)
def oracle_timeout() -> float:
    return _positive_float("OHSIZE_ORACLE_TIMEOUT", DEFAULT_ORACLE_TIMEOUT)


@lru_cache(maxsize=1)
def oracle_max_calls() -> int:
    return _positive_int("OHSIZE_ORACLE_MAX_CALLS", DEFAULT_ORACLE_MAX_CALLS)


@lru_cache(maxsize=1)
def log_level() -> str:
    level = _log_level_override or os.getenv("OHSIZE_LOG_LEVEL") or DEFAULT_LOG_LEVEL
    level = level.strip().upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ConfigError(f"OHSIZE_LOG_LEVEL {level!r} is not a logging level")
    return level


def configure_logging() -> None:
    """Attach a stderr handler to the package logger (CLI use only)."""
    package_logger = logging.getLogger("ohsize")
    if not package_logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        package_logger.addHandler(handler)
    package_logger.setLevel(log_level())
