"""
Report emission: JSON for machines, CSV (the report's rows) for plotting.
"""

import json
import logging
import os
from fractions import Fraction
from typing import Dict, Optional

import mpmath
import pandas as pd

from src.errors import ConfigError

logger = logging.getLogger(__name__)

FORMATS = ('json', 'csv')


def _plain(value):
    if isinstance(value, (Fraction, mpmath.mpf)):
        return str(value)
    if hasattr(value, 'item'):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def _cell(value):
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True, default=_plain)
    return value


def render(report: Dict, fmt: str = 'json') -> str:
    """Serialize a report; identical reports give identical text."""
    if fmt == 'json':
        return json.dumps(report, sort_keys=True, indent=2, default=_plain) + '\n'
    if fmt == 'csv':
        rows = [{key: _cell(value) for key, value in row.items()} for row in report.get('rows', [])]
        frame = pd.DataFrame(rows)
        frame = frame.reindex(sorted(frame.columns), axis=1)
        return frame.to_csv(index=False)
    raise ConfigError(f"unknown report format {fmt!r}, expected one of {FORMATS}")


def write_report(report: Dict, path: Optional[str] = None, fmt: str = 'json') -> str:
    """Render the report and write it to path (or return it for stdout)."""
    text = render(report, fmt)
    if path:
        try:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(path, 'w') as handle:
                handle.write(text)
        except OSError as e:
            logger.error(f"Cannot write report to {path}: {e}")
            raise
        logger.info(f"Wrote {report.get('kind')} report ({fmt}) to {path}")
    return text
