"""
Helper utility functions
"""
from typing import Any, Dict, Tuple
import json
import os

from utils.errors import ConfigError


def save_json(data: Dict[str, Any], filepath: str):
    """Save data to JSON file (floats written with round-trip precision)"""
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False, allow_nan=False)
        f.write('\n')


def load_json(filepath: str) -> Dict[str, Any]:
    """Load data from JSON file"""
    with open(filepath, 'r', encoding='utf-8') as f:
        return json.load(f)


def parse_grid(spec: str) -> Tuple[float, float, int]:
    """Parse a 'LO:HI:N' grid flag"""
    parts = spec.split(':')
    try:
        if len(parts) != 3:
            raise ValueError(spec)
        lo, hi, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"grid must look like LO:HI:N, got {spec!r}") from None
    if points < 2 or not hi > lo:
        raise ConfigError(f"grid needs HI > LO and N >= 2, got {spec!r}")
    return lo, hi, points
