"""Helper functions and utilities."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
import yaml

from src.core.errors import ValidationError

# Keys that do not change results and are left out of the spec hash
VOLATILE_KEYS = ("out", "workers", "logging")


def setup_logging(log_file: str = None, level=logging.INFO):
    """
    Setup logging configuration.

    Args:
        log_file: Optional path to log file
        level: Logging level (name or number)
    """
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    if isinstance(level, str):
        name, level = level, logging.getLevelName(level.upper())
        if not isinstance(level, int):
            raise ValidationError(f"Unknown log level {name!r}")

    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=log_format, handlers=handlers, force=True)


def load_config(config_path: str) -> Dict[str, Any]:
    """
    Load configuration from YAML or JSON file.

    Args:
        config_path: Path to configuration file

    Returns:
        Configuration dictionary
    """
    path = Path(config_path)
    if not path.exists():
        raise ValidationError(f"Config file not found: {config_path}")

    with open(path, 'r') as f:
        try:
            if path.suffix in ['.yaml', '.yml']:
                config = yaml.safe_load(f)
            elif path.suffix == '.json':
                config = json.load(f)
            else:
                raise ValidationError(f"Unsupported config format: {path.suffix}")
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ValidationError(f"Cannot parse {config_path}: {e}") from e

    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ValidationError(f"{config_path} must hold a mapping at top level")
    return config


def spec_hash(config: Dict[str, Any]) -> str:
    """
    SHA-256 of the canonical JSON form of a resolved experiment config.

    Args:
        config: Resolved configuration

    Returns:
        Hex digest
    """
    canonical = {k: v for k, v in config.items() if k not in VOLATILE_KEYS}
    text = json.dumps(canonical, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def header_lines(header: Optional[Dict[str, Any]]) -> str:
    return "".join(f"# {key}: {value}\n" for key, value in (header or {}).items())


def write_csv(df: pd.DataFrame, file_path: str, header: Optional[Dict[str, Any]] = None):
    """
    Save a DataFrame as CSV preceded by '# key: value' comment lines.

    Floats are written with repr precision so reruns compare byte for byte.

    Args:
        df: Table to save
        file_path: Path to save the file
        header: Key/value pairs for the comment lines
    """
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w', newline='') as f:
        f.write(header_lines(header))
        df.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")


def read_csv(file_path: str) -> pd.DataFrame:
    """Read a CSV written by `write_csv`, skipping the comment lines."""
    return pd.read_csv(file_path, comment="#")


def read_header(file_path: str) -> Dict[str, str]:
    """Leading '# key: value' lines of a result file."""
    header = {}
    with open(file_path, 'r') as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
    return header


def ensure_dir(directory: str) -> Path:
    """
    Ensure directory exists, create if it doesn't.

    Args:
        directory: Path to directory

    Returns:
        The directory as a Path
    """
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return path
