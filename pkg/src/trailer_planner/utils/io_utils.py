"""
I/O utility functions for the trailer planner
"""

import gzip
import io
import json
import logging
import os
from typing import Any, Dict, List, Tuple

import pandas as pd

from src.trailer_planner.errors import LibraryFormatError, UnsupportedVersionError

logger = logging.getLogger('TrailerPlanner')


def ensure_directory_exists(directory_path: str) -> None:
    """
    Create directory if it doesn't exist

    Args:
        directory_path: Path to directory to create
    """
    if directory_path and not os.path.exists(directory_path):
        os.makedirs(directory_path)
        logger.info(f"Created directory: {directory_path}")


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=1, sort_keys=True, ensure_ascii=False, allow_nan=True) + "\n"


def load_json_data(file_path: str) -> Any:
    """
    Load data from a JSON file (gzip-compressed when the name ends in .gz)

    Args:
        file_path: Path to JSON file

    Returns:
        Loaded data
    """
    try:
        if file_path.endswith('.gz'):
            with gzip.open(file_path, 'rt', encoding='utf-8') as f:
                data = json.load(f)
        else:
            with open(file_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        logger.debug(f"Loaded data from {file_path}")
        return data
    except json.JSONDecodeError as e:
        logger.error(f"Corrupt JSON in {file_path}: {str(e)}")
        raise LibraryFormatError(f"Corrupt JSON in {file_path}: {e}") from e
    except Exception as e:
        logger.error(f"Error loading data from {file_path}: {str(e)}")
        raise


def save_results(data: Any, file_path: str) -> None:
    """
    Save data to a JSON file with sorted keys so re-saves are byte-identical

    Args:
        data: Data to save
        file_path: Path to save to
    """
    try:
        ensure_directory_exists(os.path.dirname(file_path))
        text = _dumps(data)
        if file_path.endswith('.gz'):
            # mtime=0 keeps the gzip header deterministic
            with open(file_path, 'wb') as raw:
                with gzip.GzipFile(fileobj=raw, mode='wb', mtime=0, filename='') as f:
                    f.write(text.encode('utf-8'))
        else:
            with open(file_path, 'w', encoding='utf-8') as f:
                f.write(text)
        logger.info(f"Results saved to {file_path}")
    except Exception as e:
        logger.error(f"Error saving results to {file_path}: {str(e)}")
        raise


def check_format_version(data: Dict, supported_major: int, what: str) -> None:
    """
    Reject documents whose major format version is not supported

    Args:
        data: Parsed document carrying a 'format_version' field
        supported_major: Major version this build reads
        what: Human-readable document kind for error messages
    """
    if not isinstance(data, dict) or 'format_version' not in data:
        raise LibraryFormatError(f"{what} has no format_version field")
    try:
        major = int(str(data['format_version']).split('.')[0])
    except ValueError as e:
        raise LibraryFormatError(f"{what} has a malformed format_version") from e
    if major != supported_major:
        logger.error(f"{what} format version {data['format_version']} is not supported")
        raise UnsupportedVersionError(
            f"{what} format version {data['format_version']} (supported major: {supported_major})"
        )


def save_table(df: pd.DataFrame, file_path: str, metadata: Dict[str, Any]) -> None:
    """
    Save a DataFrame as CSV preceded by '# key=value' metadata lines

    Args:
        df: Table to save
        file_path: Destination path
        metadata: Header values, written in sorted key order
    """
    try:
        ensure_directory_exists(os.path.dirname(file_path))
        lines: List[str] = [f"# {key}={json.dumps(metadata[key], sort_keys=True)}" for key in sorted(metadata)]
        buffer = io.StringIO()
        df.to_csv(buffer, index=False, float_format='%.17g', lineterminator='\n')
        with open(file_path, 'w', encoding='utf-8', newline='') as f:
            f.write("\n".join(lines) + ("\n" if lines else ""))
            f.write(buffer.getvalue())
        logger.info(f"Table with {len(df)} rows saved to {file_path}")
    except Exception as e:
        logger.error(f"Error saving table to {file_path}: {str(e)}")
        raise


def load_table(file_path: str) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """
    Load a CSV written by save_table

    Args:
        file_path: Path to the CSV file

    Returns:
        Tuple of (DataFrame, metadata dictionary)
    """
    if not os.path.exists(file_path):
        logger.error(f"File not found: {file_path}")
        raise FileNotFoundError(file_path)
    metadata: Dict[str, Any] = {}
    with open(file_path, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].strip().partition('=')
            try:
                metadata[key] = json.loads(value)
            except json.JSONDecodeError as e:
                raise LibraryFormatError(f"Bad metadata line in {file_path}: {line.strip()}") from e
    df = pd.read_csv(file_path, comment='#')
    logger.debug(f"Loaded {len(df)} rows from {file_path}")
    return df, metadata
