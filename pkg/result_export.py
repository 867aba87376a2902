"""
PPA Cooling - Result Export
===========================

CSV and JSON writers shared by the command line and the HTTP service.

- CSV: header row, floats at 17 significant digits, exact fractions as 'p/q'
- JSON: {"metadata": {...}, "data": [...]}

Metadata never carries timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import math
import os
import subprocess
import sys
from contextlib import contextmanager
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from asymptotics import AsymptoticPrediction, asymptotic_state, qubit1_polarization_limit
from cooling_state import as_vector, backend_of
from ppa_engine import SUMMARY_COLUMNS, IterationRecord, Trajectory

logger = logging.getLogger(__name__)

FORMAT_CSV = 'csv'
FORMAT_JSON = 'json'
FORMATS = (FORMAT_CSV, FORMAT_JSON)

SUMMARY_SUFFIX = '.summary.json'


@functools.lru_cache(maxsize=1)
def git_describe() -> str:
    """`git describe` of the source tree, 'unknown' outside a checkout"""
    try:
        result = subprocess.run(
            ['git', 'describe', '--always', '--dirty', '--tags'],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return 'unknown'
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else 'unknown'


def build_metadata(**fields) -> Dict:
    metadata = {'tool': 'ppa-cooling', 'git_describe': git_describe()}
    metadata.update(fields)
    return metadata


def format_value(value) -> str:
    """CSV cell text; floats round-trip exactly through '.17g'"""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return str(value)


def parse_value(text: str):
    """Inverse of format_value for numeric cells"""
    if text == '':
        return None
    if '/' in text:
        return Fraction(text)
    if text in ('true', 'false'):
        return text == 'true'
    return float(text)


def to_jsonable(value):
    """numpy scalars/arrays, fractions and non-finite floats in JSON-safe form"""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        if backend_of(value) == 'rational':
            return [str(item) for item in value]
        return [to_jsonable(float(item)) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


@contextmanager
def _open_output(path: Optional[str]):
    if path is None or path == '-':
        yield sys.stdout
        return
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        yield handle


def write_csv(path: Optional[str], columns: Sequence[str], rows: Iterable[Sequence]):
    with _open_output(path) as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def write_json(path: Optional[str], metadata: Dict, data) -> None:
    with _open_output(path) as handle:
        json.dump({'metadata': to_jsonable(metadata), 'data': to_jsonable(data)}, handle, indent=2)
        handle.write('\n')


def read_json(path: str) -> Tuple[Dict, object]:
    with open(path, encoding='utf-8') as handle:
        payload = json.load(handle)
    return payload.get('metadata', {}), payload.get('data')


def write_table(path: Optional[str], fmt: str, columns: Sequence[str], rows: Sequence[Sequence],
                metadata: Dict):
    """Rows as CSV, or as a list of column->value objects under JSON 'data'"""
    if fmt == FORMAT_CSV:
        write_csv(path, columns, rows)
    else:
        write_json(path, metadata, [dict(zip(columns, row)) for row in rows])


# ============================================================================
# Trajectories
# ============================================================================

def trajectory_summary(trajectory: Trajectory) -> Dict:
    """Run summary plus how far the final marginal sits from the closed-form limit"""
    config = trajectory.config
    summary = trajectory.summary()
    expected = asymptotic_state(config.n, config.reset)
    deviation = np.abs(trajectory.final_marginal.p.astype(float) - expected.p.astype(float))
    summary.update({
        'asymptotic_p0': float(expected.p[0]),
        'asymptotic_marginal': expected.to_list(),
        'max_deviation_from_asymptote': float(deviation.max()),
        'qubit1_polarization_limit': qubit1_polarization_limit(config.n, config.reset),
    })
    return summary


def _snapshot_columns(trajectory: Trajectory) -> List[str]:
    columns = list(SUMMARY_COLUMNS)
    size = 2 ** trajectory.config.n
    if trajectory.marginals is not None:
        columns += [f'm{i}' for i in range(size)]
    if trajectory.post_sort_states is not None:
        joint = size * trajectory.config.reset.k
        columns += [f'sorted{i}' for i in range(joint)]
        columns += [f'reset{i}' for i in range(joint)]
    return columns


def trajectory_rows(trajectory: Trajectory) -> Tuple[List[str], List[list]]:
    columns = _snapshot_columns(trajectory)
    rows = []
    for record in trajectory.records:
        row = [record.t, record.p0, record.p1, record.delta_p0, record.max_distance, record.qubit1_polarization]
        if record.marginal is not None:
            row.extend(record.marginal)
        if record.post_sort is not None:
            row.extend(record.post_sort.probs)
            row.extend(record.post_reset.probs)
        rows.append(row)
    return columns, rows


def write_trajectory(trajectory: Trajectory, path: Optional[str], fmt: str,
                     extra_metadata: Optional[Dict] = None, summary_path: Optional[str] = None) -> Dict:
    """Write per-iteration rows; the summary goes into metadata (JSON) or a sidecar (CSV).

    The CSV sidecar defaults to <path>.summary.json. When the rows go to stdout
    and no summary_path is given, the summary JSON goes to stderr.
    """
    summary = trajectory_summary(trajectory)
    metadata = build_metadata(**{**trajectory.config.describe(), **(extra_metadata or {})})
    columns, rows = trajectory_rows(trajectory)

    if fmt == FORMAT_CSV:
        write_csv(path, columns, rows)
        if summary_path is None and path not in (None, '-'):
            summary_path = path + SUMMARY_SUFFIX
        if summary_path is None:
            json.dump({'metadata': to_jsonable(metadata), 'data': to_jsonable(summary)}, sys.stderr, indent=2)
            sys.stderr.write('\n')
        else:
            write_json(summary_path, metadata, summary)
    else:
        metadata['summary'] = summary
        data = []
        for record, row in zip(trajectory.records, rows):
            entry = dict(zip(SUMMARY_COLUMNS, row))
            if record.marginal is not None:
                entry['marginal'] = record.marginal
            if record.post_sort is not None:
                entry['post_sort'] = record.post_sort.probs
                entry['post_reset'] = record.post_reset.probs
            data.append(entry)
        write_json(path, metadata, data)
    logger.info("Wrote %d trajectory rows (%s) to %s", len(rows), fmt, path or 'stdout')
    return summary


def read_trajectory_csv(path: str) -> List[IterationRecord]:
    """Re-import a CSV trajectory; marginal columns come back when they were written"""
    records = []
    with open(path, newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        header = next(reader)
        marginal_at = [i for i, name in enumerate(header) if name.startswith('m') and name[1:].isdigit()]
        for row in reader:
            cells = dict(zip(header, row))
            marginal = None
            if marginal_at:
                marginal = as_vector([parse_value(row[i]) for i in marginal_at])
            records.append(IterationRecord(
                t=int(cells['t']),
                p0=float(cells['p0']),
                p1=float(cells['p1']),
                delta_p0=float(cells['delta_p0']),
                max_distance=float(cells['max_distance']),
                qubit1_polarization=float(cells['qubit1_polarization']),
                marginal=marginal,
            ))
    return records


# ============================================================================
# Predictions
# ============================================================================

PREDICTION_COLUMNS = (
    'n', 'epsilon_eff', 'large_gap', 'p0_infinity', 'qubit1_polarization_limit',
    'lambda1_limit', 'schulman_bound', 't_eff',
)


def write_prediction(prediction: AsymptoticPrediction, path: Optional[str], fmt: str,
                     extra_metadata: Optional[Dict] = None):
    data = prediction.to_dict()
    if fmt == FORMAT_CSV:
        size = 2 ** prediction.n
        columns = list(PREDICTION_COLUMNS) + [f'p{i}' for i in range(size)] + \
            [f'qubit{j}_polarization' for j in range(1, prediction.n + 1)]
        row = [data.get(name) for name in PREDICTION_COLUMNS]
        row += list(prediction.p_infinity.p) + list(prediction.per_qubit_polarizations)
        write_csv(path, columns, [row])
    else:
        write_json(path, build_metadata(**(extra_metadata or {})), data)
