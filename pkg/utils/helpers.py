"""
Helper functions shared by the simulator modules.
"""
import json
from pathlib import Path

import numpy as np

from chansim.errors import DataFileError
from utils import config


def data_path(file_name: str) -> Path:
    """
    Resolve a file name against the configured data root.

    The root is read on every call so tests can point
    CHANSIM_DATA_ROOT somewhere else after import.
    """
    return Path(config.DATA_ROOT) / file_name


def load_data(file_name: str) -> dict:
    """
    Load a JSON data file from the data directory.

    Args:
        file_name: Name of the JSON file in the data directory

    Returns:
        Dictionary containing the file contents

    Raises:
        DataFileError: If the file is missing or unreadable
    """
    path = data_path(file_name)
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise DataFileError(f"Data file '{file_name}' not found under {path.parent}") from exc
    except json.JSONDecodeError as exc:
        raise DataFileError(f"Data file '{file_name}' is not valid JSON: {exc}") from exc


def drop_rng(seed: int, index: int = 0) -> np.random.Generator:
    """
    Build the random stream for one drop.

    Streams are keyed by (seed, index) on a counter-based bit generator,
    so drop k draws the same numbers no matter which worker runs it.

    Args:
        seed: Run seed
        index: Drop (or step, or tap) index

    Returns:
        Independent numpy Generator
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def db2lin(value_db):
    """Convert dB to linear power."""
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def lin2db(value_lin):
    """Convert linear power to dB."""
    return 10.0 * np.log10(np.asarray(value_lin, dtype=float))
