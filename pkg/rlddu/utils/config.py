"""
RLDDU Configuration Management
Environment settings, output paths and experiment config-file loading.
"""

import os
from pathlib import Path
from typing import Any

import structlog
from dotenv import dotenv_values
from pydantic import ValidationError

from rlddu.core.errors import ConfigError
from rlddu.core.schemas import ExperimentConfig

logger = structlog.get_logger(__name__)

DEFAULT_OUTPUT_DIR = Path(os.getenv("RLDDU_OUTPUT_DIR", "output"))

RESULTS_FILE = "results.csv"
TRACE_FILE = "training_trace.csv"
FLOPS_FILE = "flops.csv"
DEPTH_FILE = "depth_summary.csv"
CHECKPOINT_FILE = "policy.pt"


def ensure_output_dir(out_dir: Path) -> Path:
    """Create the output directory (and its logs/ subdirectory)."""
    out_dir = Path(out_dir)
    (out_dir / "logs").mkdir(parents=True, exist_ok=True)
    return out_dir


def load_config(path: Path | str | None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Load an experiment config from a flat key=value file.

    Args:
        path: Config file path; None uses the built-in desk-scale defaults
        overrides: Values that replace file entries (CLI flags)

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: If the file is missing, a key is unknown or a value is invalid
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw = dotenv_values(path, encoding="utf-8")
        missing = sorted(key for key, value in raw.items() if value is None)
        if missing:
            raise ConfigError(f"config keys without a value: {missing}")
        values.update(raw)

    if "out_dir" not in values:
        values["out_dir"] = str(DEFAULT_OUTPUT_DIR)
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})

    try:
        config = ExperimentConfig(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"invalid config {path or '<defaults>'}: {problems}") from e

    logger.info(
        "config_loaded",
        path=str(path) if path else None,
        algorithms=config.algorithms,
        k_users=config.k_users,
        snr_db=config.snr_db,
        seeds=config.seeds,
    )
    return config
