"""
datafiles.py: CSV Ingestion and Deterministic CSV Output

Readers validate every input file against its schema and report all offending
rows at once; writers format floats with repr so reruns are byte-identical.

Schemas:
--------
- visibility:   tau_s, visibility[, sigma]   + sidecar {"sequence", "omega_e_hz"[, "label"]}
- spectrum:     detuning_hz, counts[, time_s] + sidecar {"sideband", "electron_state"}
- time series:  time_s, <value>[, sigma]
- xy:           <x>, <y>[, sigma]

The sidecar of data.csv is data.json next to it.

Functions:
----------
- read_columns(path, required, optional):   numeric columns as numpy arrays
- read_visibility_dataset(path):            VisibilityDataset
- read_sideband_spectrum(path):             SidebandSpectrum (1-D or time-resolved)
- read_time_series(path, value_column):     TimeSeries
- read_sidecar(path):                       sidecar JSON document
- write_csv(path, header, rows):            repr-exact CSV
"""

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from .coherence import VisibilityDataset
from .errors import ParameterError, SchemaError
from .fitters import SidebandSpectrum, TimeSeries

logger = logging.getLogger(__name__)


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def read_sidecar(path, required=()):
    """
    Read the JSON sidecar of a data file.

    Raises:
        SchemaError: If the sidecar is missing, unreadable or lacks a required key.
    """
    meta = sidecar_path(path)
    if not meta.exists():
        raise SchemaError(f'missing sidecar {meta}', path=meta)
    try:
        with open(meta, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError(f'sidecar {meta} is not valid JSON: {exc}', path=meta)
    missing = [k for k in required if k not in doc]
    if missing:
        raise SchemaError(f'sidecar {meta} lacks keys {missing}', path=meta, columns=missing)
    return doc


def read_columns(path, required, optional=()):
    """
    Read numeric columns from a CSV file with a header row.

    Args:
        path (str or Path): CSV file.
        required (sequence of str): Columns that must be present.
        optional (sequence of str): Columns read when present.
    Returns:
        dict: column -> numpy.ndarray (optional columns only when present).
    Raises:
        SchemaError: Missing columns, or rows with empty/non-numeric cells
            (all offending row numbers are listed, counting the header as row 1).
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f'data file {path} does not exist', path=path)
    with open(path, newline='', encoding='utf-8') as csvfile:
        reader = csv.DictReader(csvfile)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f'{path}: missing columns {missing}', path=path, columns=missing)
        wanted = list(required) + [c for c in optional if c in header]
        values = {c: [] for c in wanted}
        bad_rows = []
        for row_number, row in enumerate(reader, start=2):
            row = {(k or '').strip(): v for k, v in row.items()}
            try:
                parsed = {c: float(row[c]) for c in wanted}
            except (TypeError, ValueError):
                bad_rows.append(row_number)
                continue
            if not all(math.isfinite(v) for v in parsed.values()):
                bad_rows.append(row_number)
                continue
            for c in wanted:
                values[c].append(parsed[c])
    if bad_rows:
        raise SchemaError(f'{path}: rows {bad_rows} hold empty or non-numeric values',
                          path=path, rows=bad_rows, columns=wanted)
    if not values[wanted[0]]:
        raise SchemaError(f'{path}: no data rows', path=path)
    return {c: np.array(v) for c, v in values.items()}


def sigma_column(columns, path):
    if 'sigma' in columns:
        return columns['sigma']
    logger.warning('%s has no sigma column: fitting unweighted', path)
    return None


def read_visibility_dataset(path):
    """CP trace with its sequence and electron splitting from the sidecar."""
    columns = read_columns(path, ('tau_s', 'visibility'), ('sigma',))
    meta = read_sidecar(path, ('sequence', 'omega_e_hz'))
    try:
        return VisibilityDataset(
            omega_e=float(meta['omega_e_hz']), sequence=meta['sequence'],
            times=columns['tau_s'], values=columns['visibility'],
            sigma=sigma_column(columns, path), label=meta.get('label', Path(path).stem))
    except ParameterError as exc:
        raise SchemaError(f'{path}: {exc}', path=path)


def read_sideband_spectrum(path):
    """
    Sideband spectrum, 1-D or time-resolved.

    With a time_s column the rows must form a complete detuning x time grid in
    any order; the result has one column per distinct time.
    """
    columns = read_columns(path, ('detuning_hz', 'counts'), ('time_s',))
    meta = read_sidecar(path, ('sideband', 'electron_state'))
    detuning = columns['detuning_hz']
    counts = columns['counts']
    try:
        if 'time_s' not in columns:
            order = np.argsort(detuning)
            return SidebandSpectrum(detuning=detuning[order], values=counts[order],
                                    electron_state=meta['electron_state'], sideband=meta['sideband'])
        grid_d = np.unique(detuning)
        grid_t = np.unique(columns['time_s'])
        if grid_d.size * grid_t.size != counts.size:
            raise SchemaError(f'{path}: rows do not form a complete detuning x time grid', path=path,
                              columns=['detuning_hz', 'time_s'])
        values = np.full((grid_d.size, grid_t.size), np.nan)
        values[np.searchsorted(grid_d, detuning), np.searchsorted(grid_t, columns['time_s'])] = counts
        if np.any(np.isnan(values)):
            raise SchemaError(f'{path}: duplicate (detuning, time) cells', path=path,
                              columns=['detuning_hz', 'time_s'])
        return SidebandSpectrum(detuning=grid_d, values=values, times=grid_t,
                                electron_state=meta['electron_state'], sideband=meta['sideband'])
    except ParameterError as exc:
        raise SchemaError(f'{path}: {exc}', path=path)


def read_time_series(path, value_column, time_column='time_s'):
    columns = read_columns(path, (time_column, value_column), ('sigma',))
    return TimeSeries(columns[time_column], columns[value_column], sigma_column(columns, path))


def format_value(value):
    """repr for floats (shortest round-trip form), str otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    """
    Write rows under a header with repr-exact floats and '\\n' line endings.

    Args:
        path (str or Path): Output file.
        header (sequence of str): Column names.
        rows (iterable of sequence): Row values in header order.
    """
    with open(path, 'w', newline='', encoding='utf-8') as csvfile:
        writer = csv.writer(csvfile, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.debug('wrote %s', path)
