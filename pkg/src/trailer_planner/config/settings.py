"""
Application settings for the trailer planner.

Environment variables (optionally from a .env file) provide process-wide
settings; a JSON config file passed with --config overrides the per-module
tunable dataclasses section by section.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, TypeVar

from dotenv import load_dotenv

from src.trailer_planner.errors import InvalidParamsError
from src.trailer_planner.utils.io_utils import load_json_data

logger = logging.getLogger('TrailerPlanner')

T = TypeVar('T')

CONFIG_SECTIONS = ('vehicle', 'ocp', 'lattice', 'dataset', 'net', 'heuristic', 'lqr', 'tolerances', 'planner')


@dataclass(frozen=True)
class AppSettings:
    log_level: str = 'INFO'
    threads: int = 1
    seed: int = 0
    data_dir: str = 'data'


def load_settings(env_file: Optional[str] = None) -> AppSettings:
    """
    Read process-wide settings from the environment

    Args:
        env_file: Optional path to a .env file; the default lookup is used when None

    Returns:
        AppSettings populated from TRAILER_PLANNER_* variables
    """
    load_dotenv(dotenv_path=env_file, override=False)
    try:
        return AppSettings(
            log_level=os.environ.get('TRAILER_PLANNER_LOG_LEVEL', 'INFO'),
            threads=int(os.environ.get('TRAILER_PLANNER_THREADS', '1')),
            seed=int(os.environ.get('TRAILER_PLANNER_SEED', '0')),
            data_dir=os.environ.get('TRAILER_PLANNER_DATA_DIR', 'data'),
        )
    except ValueError as e:
        logger.error(f"Invalid TRAILER_PLANNER_* environment value: {str(e)}")
        raise


def load_config_overrides(path: Optional[str]) -> Dict[str, Dict[str, Any]]:
    """
    Load a JSON config document of per-section overrides

    Args:
        path: Path to the config file, or None for no overrides

    Returns:
        Mapping of section name to field overrides
    """
    if not path:
        return {}
    data = load_json_data(path)
    if not isinstance(data, dict):
        raise InvalidParamsError(f"Config file {path} must contain a JSON object")
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise InvalidParamsError(f"Unknown config sections: {sorted(unknown)}")
    return data


def apply_overrides(base: T, overrides: Optional[Dict[str, Any]]) -> T:
    """Return a copy of the dataclass `base` with the given fields replaced."""
    if not overrides:
        return base
    names = {f.name for f in dataclasses.fields(base)}
    unknown = set(overrides) - names
    if unknown:
        raise InvalidParamsError(f"Unknown fields for {type(base).__name__}: {sorted(unknown)}")
    converted = {}
    for key, value in overrides.items():
        current = getattr(base, key)
        if isinstance(current, tuple) and isinstance(value, list):
            value = tuple(value)
        converted[key] = value
    return dataclasses.replace(base, **converted)
