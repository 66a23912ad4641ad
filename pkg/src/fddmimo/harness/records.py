"""
Result records and their CSV + JSON-sidecar serialization.
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = ['ResultRecord', 'MixedConfigError', 'summarize', 'write_records',
           'read_records']


class MixedConfigError(ValueError):
    """Records produced by different configurations in one file."""


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    sweep_variable: str
    sweep_value: float
    series: str
    metric: str
    mean: float
    stderr: float
    trials: int
    seed: int
    config_hash: str


def summarize(samples):
    """Mean and standard error ``std(ddof=1) / sqrt(n)`` of a sample."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        return float('nan'), float('nan')
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(x)), se


_COLUMNS = [f.name for f in fields(ResultRecord)]


def _check_single_hash(records):
    hashes = {r.config_hash for r in records}
    if len(hashes) > 1:
        raise MixedConfigError(f'records from {len(hashes)} configurations '
                               'cannot share one file')
    return hashes.pop() if hashes else None


def write_records(records, out_dir, config, name=None, append=False):
    """
    Write ``<name>.csv`` and a ``<name>.json`` sidecar into ``out_dir``.

    With ``append`` new rows join an existing file only when it was produced
    by the same configuration.

    Returns
    -------
    csv_path, json_path : str
    """
    records = list(records)
    h = _check_single_hash(records)
    if h is not None and h != config.config_hash():
        raise MixedConfigError('records were not produced by this configuration')
    name = name or (records[0].experiment if records else 'results')
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f'{name}.csv')
    json_path = os.path.join(out_dir, f'{name}.json')
    exists = append and os.path.exists(csv_path)
    if exists:
        _check_single_hash(read_records(csv_path) + records)
    with open(csv_path, 'a' if exists else 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(_COLUMNS)
        for r in records:
            writer.writerow([_fmt(getattr(r, c)) for c in _COLUMNS])
    from .. import __version__
    from .config import SCHEMA_VERSION
    sidecar = {'package_version': __version__, 'schema_version': SCHEMA_VERSION,
               'config_hash': config.config_hash(), 'config': config.to_dict()}
    with open(json_path, 'w', encoding='utf-8') as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return csv_path, json_path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_records(csv_path):
    """Parse a results CSV; a file mixing configurations is rejected."""
    out = []
    with open(csv_path, newline='', encoding='utf-8') as fh:
        for row in csv.DictReader(fh):
            out.append(ResultRecord(
                row['experiment'], row['sweep_variable'], float(row['sweep_value']),
                row['series'], row['metric'], float(row['mean']),
                float(row['stderr']), int(row['trials']), int(row['seed']),
                row['config_hash']))
    _check_single_hash(out)
    return out


def as_dicts(records):
    return [asdict(r) for r in records]
