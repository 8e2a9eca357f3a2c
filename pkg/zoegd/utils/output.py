"""
CSV and JSON writers for traces, experiment tables and summaries.

CSV: a header row, then one row per record (csv module defaults: CRLF line
ends, minimal quoting); floats as their shortest round-trip repr, undefined
values empty, vectors as JSON arrays.
JSON: one object {"schema_version": "1", "config", "records", "summary"};
undefined values (None, NaN) are null.
"""

import csv
import enum
import json
import logging
import math
import sys

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = '1'
FORMATS = ('csv', 'json')


def to_plain(value):
    """Convert numpy scalars/arrays, enums and non-finite floats to JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def thin_records(records, every):
    """Keep records with t divisible by `every`, plus the last one."""
    every = int(every)
    if every <= 1 or not records:
        return list(records)
    kept = [rec for rec in records[:-1] if rec.get('t', 0) % every == 0]
    kept.append(records[-1])
    return kept


def _csv_cell(value):
    value = to_plain(value)
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return str(value)


def _columns(records, columns):
    if columns is not None:
        return list(columns)
    out = []
    for rec in records:
        for key in rec:
            if key not in out:
                out.append(key)
    return out


def write_csv(stream, records, columns=None):
    writer = csv.writer(stream)
    header = _columns(records, columns)
    writer.writerow(header)
    for rec in records:
        writer.writerow([_csv_cell(rec.get(key)) for key in header])


def write_json(stream, records, config=None, summary=None):
    document = {
        'schema_version': SCHEMA_VERSION,
        'config': to_plain(config or {}),
        'records': to_plain(list(records)),
        'summary': to_plain(summary or {}),
    }
    json.dump(document, stream, indent=2, allow_nan=False)
    stream.write('\n')


def write_results(path, records, fmt='csv', config=None, summary=None, columns=None, thin=1):
    """
    Write `records` (a list of dicts) to `path` ('-' for stdout).

    :param fmt: 'csv' or 'json'
    :param config: effective configuration embedded in JSON output
    :param summary: run or experiment summary embedded in JSON output
    :param columns: CSV header; defaults to the keys in first-seen order
    :param thin: keep every `thin`-th record by its 't' field, plus the last
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    records = thin_records(list(records), thin)
    if path in (None, '-'):
        stream = sys.stdout
        close = False
    else:
        stream = open(path, 'w', newline='' if fmt == 'csv' else None, encoding='utf-8')
        close = True
    try:
        if fmt == 'csv':
            write_csv(stream, records, columns)
        else:
            write_json(stream, records, config, summary)
    finally:
        if close:
            stream.close()
    logger.info(f'wrote {len(records)} {fmt} record(s) to {path or "-"}')
