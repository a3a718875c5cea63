"""CSV ingestion and export of condition records and work histories.

Conditions file: ``section_id,year,`` followed by the 21 indicator names, one row
per section-year. Work-history file: ``section_id,work_row_index,work_year``.
"""

import csv
import logging
import os
import warnings

import numpy as np

from .schema import (
    FIRST_YEAR,
    INDICATORS,
    INDICATOR_NAMES,
    N_INDICATORS,
    N_WORK_TYPES,
    TARGET_YEAR,
    YEARS,
    SectionHistory,
    ValidationError,
)

log = logging.getLogger(__name__)

CONDITIONS_HEADER = ("section_id", "year") + INDICATOR_NAMES
WORK_HEADER = ("section_id", "work_row_index", "work_year")
CONDITIONS_FILE = "conditions.csv"
WORK_FILE = "work_history.csv"


class ParseError(ValueError):
    """Malformed CSV content; carries the file and 1-based line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class IncompleteSectionWarning(UserWarning):
    """A section was dropped for missing years or work history."""


def _read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if tuple(h.strip() for h in first) != header:
            raise ParseError(path, 1, f"header does not match expected columns {','.join(header)}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _parse_int(path, line, text, what):
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line, f"{what} {text!r} is not an integer")


def read_work_history(path):
    """``{section_id: (row_index, year)}``."""
    out = {}
    for line, row in _read_rows(path, WORK_HEADER):
        sid = row[0].strip()
        if sid in out:
            raise ParseError(path, line, f"duplicate work history for section {sid}")
        work = _parse_int(path, line, row[1], "work_row_index")
        year = _parse_int(path, line, row[2], "work_year")
        if not 1 <= work <= N_WORK_TYPES:
            raise ValidationError(f"section {sid}: work_row_index {work} not in 1..{N_WORK_TYPES}")
        out[sid] = (work, year)
    return out


def ingest_csv(conditions_path, work_history_path, strict=False, require_target=True):
    """Parse and range-check section histories.

    Sections missing any year 2000-2018, any indicator value, or a work-history
    row are dropped; each drop emits an :class:`IncompleteSectionWarning`.
    With ``strict`` they raise :class:`ValidationError` instead. When
    ``require_target`` is false the 2018 row may be absent and is filled with
    NaN (prediction input). Rows for years outside 2000-2018 are ignored.
    Sections keep the order of their first appearance in the conditions file.
    """
    work = read_work_history(work_history_path)
    records = {}
    missing_cells = set()
    for line, row in _read_rows(conditions_path, CONDITIONS_HEADER):
        sid = row[0].strip()
        year = _parse_int(conditions_path, line, row[1], "year")
        table = records.setdefault(sid, {})
        if not FIRST_YEAR <= year <= TARGET_YEAR:
            continue
        if year in table:
            raise ParseError(conditions_path, line, f"duplicate year {year} for section {sid}")
        values = np.empty(N_INDICATORS)
        for j, (text, ind) in enumerate(zip(row[2:], INDICATORS)):
            text = text.strip()
            if not text:
                values[j] = np.nan
                missing_cells.add(sid)
                continue
            try:
                v = float(text)
            except ValueError:
                raise ParseError(conditions_path, line, f"{ind.name} value {text!r} is not a number")
            if not np.isfinite(v) or not ind.in_range(v):
                raise ValidationError(
                    f"section {sid}, {year}: {ind.name}={text} outside range {ind.range_kind}"
                )
            values[j] = v
        table[year] = values

    sections = []
    for sid, table in records.items():
        reason = None
        if not require_target and TARGET_YEAR not in table:
            table[TARGET_YEAR] = np.full(N_INDICATORS, np.nan)
        missing = [y for y in YEARS if y not in table]
        if sid in missing_cells and not require_target:
            missing_cells.discard(sid)
            if any(np.isnan(table[y]).any() for y in YEARS[:-1]):
                missing_cells.add(sid)
        if missing:
            reason = f"missing years {missing}"
        elif sid in missing_cells:
            reason = "missing indicator values"
        elif sid not in work:
            reason = "no work history"
        if reason and strict:
            raise ValidationError(f"section {sid} is incomplete: {reason}")
        if reason:
            log.warning("dropping section %s: %s", sid, reason)
            warnings.warn(f"section {sid} dropped: {reason}", IncompleteSectionWarning, stacklevel=2)
            continue
        w, wy = work[sid]
        sections.append(SectionHistory(sid, np.stack([table[y] for y in YEARS]), w, wy))
    return sections


def load_directory(directory, strict=False):
    return ingest_csv(os.path.join(directory, CONDITIONS_FILE), os.path.join(directory, WORK_FILE), strict)


def _fmt(value, discrete):
    if discrete:
        return str(int(value))
    return repr(float(value))


def write_conditions_csv(sections, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONDITIONS_HEADER)
        for s in sections:
            for i, year in enumerate(YEARS):
                w.writerow([s.section_id, year]
                           + [_fmt(v, ind.discrete) for v, ind in zip(s.values[i], INDICATORS)])


def write_work_history_csv(sections, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WORK_HEADER)
        for s in sections:
            w.writerow([s.section_id, s.last_work, s.last_work_year])


def write_directory(sections, directory):
    os.makedirs(directory, exist_ok=True)
    write_conditions_csv(sections, os.path.join(directory, CONDITIONS_FILE))
    write_work_history_csv(sections, os.path.join(directory, WORK_FILE))

