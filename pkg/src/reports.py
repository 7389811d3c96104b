"""
reports.py: Fit Reports, Metadata Sidecars and PDF Summaries

This module turns fit results and simulation outputs into files: FitResult
JSON documents, residual CSVs, metadata sidecars that record how each output
was produced, console tables and an optional PDF summary.

Features:
---------
- FitResult rows (Parameter, Estimate, Sigma, Note) for tables and CSV
- JSON fit documents and residual CSVs
- <stem>.meta.json sidecars with timestamp, parameters and package versions
- Tabulated console summaries
- PDF fit report with wrapped table cells

Functions:
----------
- describe_fit(result):
    Returns table rows for a FitResult.
- save_fit_json(result, filename) / save_residuals_csv(result, filename):
    FitResult documents.
- save_report_as_csv(report, filename):
    Saves a list of dict rows as CSV.
- write_metadata(output, command, params):
    Writes the metadata sidecar of an output file.
- print_summary(title, report):
    Prints a table with tabulate.
- wrap_text(text, width):
    Wraps text for PDF cells.
- save_report_as_pdf(sections, filename, title):
    Saves titled tables as a PDF report.
"""

import datetime
import json
import logging
import math
import platform
import textwrap
from importlib import metadata
from pathlib import Path

import tabulate
from fpdf import FPDF

from . import __version__
from .datafiles import write_csv

logger = logging.getLogger(__name__)

FIT_COLUMNS = ['Parameter', 'Estimate', 'Sigma', 'Note']
TRACKED_PACKAGES = ('numpy', 'scipy', 'lmfit', 'tabulate', 'fpdf')


def describe_fit(result):
    """
    Table rows for a FitResult.

    Args:
        result (FitResult): Fit outcome.
    Returns:
        list of dict: {'Parameter', 'Estimate', 'Sigma', 'Note'} per parameter.
    """
    return [{'Parameter': r['parameter'], 'Estimate': r['estimate'], 'Sigma': r['sigma'],
             'Note': r['note']} for r in result.rows()]


def save_fit_json(result, filename):
    with open(filename, 'w', encoding='utf-8') as f:
        json.dump(result.as_dict(), f, indent=2)
        f.write('\n')


def save_residuals_csv(result, filename):
    residual = result.residual if result.residual is not None else []
    write_csv(filename, ['index', 'weighted_residual'], enumerate(residual))


def save_report_as_csv(report, filename, fieldnames=None):
    """
    Save a report (list of dict rows) as CSV with repr-exact floats.

    Args:
        report (list of dict): Rows.
        filename (str or Path): Output CSV filename.
        fieldnames (list of str, optional): Column order; keys of the first row by default.
    """
    fieldnames = fieldnames or (list(report[0].keys()) if report else [])
    write_csv(filename, fieldnames, ([row.get(k, '') for k in fieldnames] for row in report))


def package_versions():
    versions = {'csmag': __version__, 'python': platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = 'not installed'
    return versions


def write_metadata(output, command, params, extra=None):
    """
    Write <stem>.meta.json next to an output file.

    Args:
        output (str or Path): The data file the metadata describes.
        command (str): Command line that produced it.
        params (dict): Parameters sufficient to reproduce it.
        extra (dict, optional): Further entries (warnings, seeds, inputs).
    Returns:
        Path: The metadata file.
    """
    output = Path(output)
    doc = {
        'output': output.name,
        'command': command,
        'generated': datetime.datetime.now().isoformat(timespec='seconds'),
        'parameters': params,
        'versions': package_versions(),
    }
    doc.update(extra or {})
    meta = output.with_name(output.stem + '.meta.json')
    with open(meta, 'w', encoding='utf-8') as f:
        json.dump(_json_safe(doc), f, indent=2, allow_nan=False)
        f.write('\n')
    return meta


def _json_safe(value):
    """Plain JSON types; non-finite floats become 'inf', '-inf' or 'nan'."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if hasattr(value, 'tolist'):
        return _json_safe(value.tolist())
    if isinstance(value, float):
        return value if math.isfinite(value) else str(value)
    if value is None or isinstance(value, (bool, int, str)):
        return value
    return str(value)


def _display(value):
    if isinstance(value, float):
        return f'{value:.6g}'
    return value


def print_summary(title, report):
    print(title)
    print(tabulate.tabulate([{k: _display(v) for k, v in row.items()} for row in report],
                            headers='keys'))


def wrap_text(text, width):
    """
    Wrap text to a specified width for PDF cell formatting.

    Args:
        text (str): The text to wrap.
        width (int): The maximum width of each line.
    Returns:
        str: Wrapped text with newlines.
    """
    return '\n'.join(textwrap.wrap(str(text), width=width)) or ''


def pdf_safe(text):
    """Core PDF fonts only cover latin-1."""
    return str(text).encode('latin-1', 'replace').decode('latin-1')


def save_report_as_pdf(sections, filename, title='Fit Report'):
    """
    Save titled tables as a PDF report.

    Args:
        sections (list of tuple): (heading, rows) where rows are dicts with
            keys Parameter, Estimate, Sigma, Note.
        filename (str or Path): Output PDF filename.
        title (str, optional): Report title.
    """
    pdf = FPDF()
    pdf.add_page()
    pdf.set_font("Arial", size=12)
    pdf.cell(200, 10, txt=pdf_safe(title), ln=True, align='C')
    pdf.cell(200, 10, txt=f"Generated: {datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S')}",
             ln=True, align='C')
    widths = (55, 45, 45, 45)
    for heading, rows in sections:
        pdf.ln(6)
        pdf.set_font("Arial", 'B', 11)
        pdf.cell(190, 8, txt=pdf_safe(heading), ln=True)
        pdf.set_font("Arial", 'B', 10)
        for column, width in zip(FIT_COLUMNS, widths):
            pdf.cell(width, 8, column, 1)
        pdf.ln()
        pdf.set_font("Arial", size=9)
        for row in rows:
            cells = [wrap_text(pdf_safe(_display(row.get(c, ''))), 26).split('\n') for c in FIT_COLUMNS]
            max_lines = max(len(c) for c in cells)
            cells = [c + [''] * (max_lines - len(c)) for c in cells]
            cell_height = 5
            for i in range(max_lines):
                for column_lines, width in zip(cells, widths):
                    pdf.cell(width, cell_height, column_lines[i], border=1)
                pdf.ln(cell_height)
    pdf.output(str(filename))
    logger.info('PDF report saved as %s', filename)
