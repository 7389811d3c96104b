"""
report_comparison.py: Compare Fit Reports Against Reference Values

This module compares the estimates of produced fit documents (JSON) with a
reference table of published values, flagging estimates that disagree by more
than a chosen number of combined standard deviations.

Features:
---------
- Reads reference rows (quantity, value, sigma, unit, description) from CSV
- Collects estimates from any number of fit documents
- Flags differences beyond n combined sigmas as DIFFERENT
- Saves the comparison as CSV and optionally as a PDF summary

Functions:
----------
- read_reference_rows(filepath):
    Reads reference rows from a CSV file.
- collect_estimates(paths):
    Reads (estimate, sigma) per parameter name from fit JSON documents.
- make_comparison_table(latest, reference, n_sigma):
    Builds a table comparing estimates and references, flagging differences.
- save_comparison_pdf(table, filename):
    Saves the comparison table as a formatted PDF report.

Usage:
------
    python -m src.cli compare fits/*.json --reference ReferenceReports/measured_reference.csv
"""

import csv
import datetime
import json
import logging
import math
from pathlib import Path

from fpdf import FPDF

from .errors import SchemaError
from .reports import pdf_safe

logger = logging.getLogger(__name__)

REFERENCE_COLUMNS = ('quantity', 'value', 'sigma', 'unit')
DEFAULT_REFERENCE = Path(__file__).resolve().parent.parent / 'ReferenceReports' / 'measured_reference.csv'


def read_reference_rows(filepath):
    """
    Read reference rows from a CSV file.

    Args:
        filepath (str or Path): Reference CSV with columns quantity, value, sigma, unit
            and an optional description.
    Returns:
        list of dict: One dict per quantity with float value and sigma.
    Raises:
        SchemaError: On missing columns or non-numeric values.
    """
    rows = []
    bad = []
    with open(filepath, newline='', encoding='utf-8') as csvfile:
        reader = csv.DictReader(csvfile)
        missing = [c for c in REFERENCE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f'{filepath}: missing columns {missing}', path=filepath, columns=missing)
        for number, row in enumerate(reader, start=2):
            try:
                rows.append({'quantity': row['quantity'].strip(), 'value': float(row['value']),
                             'sigma': float(row['sigma']), 'unit': row['unit'].strip(),
                             'description': (row.get('description') or '').strip()})
            except (TypeError, ValueError):
                bad.append(number)
    if bad:
        raise SchemaError(f'{filepath}: rows {bad} hold non-numeric values', path=filepath, rows=bad)
    return rows


def collect_estimates(paths):
    """
    Gather parameter estimates from fit JSON documents.

    Later documents override earlier ones for the same parameter name.

    Args:
        paths (iterable of str or Path): Documents with a 'parameters' list.
    Returns:
        dict: parameter -> (estimate, sigma, source file name).
    """
    estimates = {}
    for path in paths:
        with open(path, 'r', encoding='utf-8') as f:
            doc = json.load(f)
        for row in doc.get('parameters', []):
            estimates[row['parameter']] = (float(row['estimate']), float(row['sigma']),
                                           Path(path).name)
    return estimates


def make_comparison_table(latest, reference, n_sigma=2.0):
    """
    Build a table comparing estimates with reference values, flagging differences.

    Args:
        latest (dict): parameter -> (estimate, sigma, source).
        reference (list of dict): Reference rows.
        n_sigma (float, optional): Allowed distance in combined sigmas.
    Returns:
        list of dict: Quantity, Latest Value, Latest Sigma, Reference Value,
        Reference Sigma, Unit, Status ('' or 'DIFFERENT'); reference quantities
        absent from latest are skipped.
    """
    table = []
    for ref in reference:
        if ref['quantity'] not in latest:
            logger.debug('no estimate for reference quantity %s', ref['quantity'])
            continue
        value, sigma, _ = latest[ref['quantity']]
        combined = math.hypot(sigma if math.isfinite(sigma) else 0.0, ref['sigma'])
        distance = abs(value - ref['value'])
        diff = '' if distance <= n_sigma * combined else 'DIFFERENT'
        table.append({
            'Quantity': ref['quantity'],
            'Latest Value': value,
            'Latest Sigma': sigma,
            'Reference Value': ref['value'],
            'Reference Sigma': ref['sigma'],
            'Unit': ref['unit'],
            'Status': diff,
        })
    return table


def save_comparison_pdf(table, filename):
    """
    Save the comparison table as a formatted PDF report.

    Args:
        table (list of dict): Comparison table rows.
        filename (str or Path): Output PDF filename.
    """
    pdf = FPDF()
    pdf.add_page()
    pdf.set_font("Arial", size=14)
    pdf.cell(0, 12, txt="Fit Report Comparison", ln=True, align='C')
    pdf.set_font("Arial", size=11)
    pdf.cell(0, 10, txt=f"Generated: {datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S')}",
             ln=True, align='C')
    pdf.ln(8)
    pdf.set_font("Arial", 'B', 10)
    pdf.cell(40, 10, 'Quantity', 1)
    pdf.cell(38, 10, 'Latest Value', 1)
    pdf.cell(38, 10, 'Reference Value', 1)
    pdf.cell(20, 10, 'Unit', 1)
    pdf.cell(30, 10, 'Status', 1)
    pdf.ln()
    pdf.set_font("Arial", size=10)
    for row in table:
        latest = f"{row['Latest Value']:.5g} +- {row['Latest Sigma']:.2g}"
        reference = f"{row['Reference Value']:.5g} +- {row['Reference Sigma']:.2g}"
        pdf.cell(40, 10, pdf_safe(row['Quantity'][:20]), 1)
        pdf.cell(38, 10, latest[:22], 1)
        pdf.cell(38, 10, reference[:22], 1)
        pdf.cell(20, 10, pdf_safe(row['Unit'][:8]), 1)
        pdf.cell(30, 10, row['Status'], 1)
        pdf.ln()
    pdf.output(str(filename))
    logger.info('PDF comparison report saved as %s', filename)
