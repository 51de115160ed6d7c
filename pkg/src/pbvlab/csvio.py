"""Small CSV reader/writer shared by the ingestion paths.

Row numbers in error messages are 1-based data rows (the header is not
counted).
"""
import csv
import io
import math

import numpy as np

from .errors import InputError

_MINUS = str.maketrans({"−": "-", "–": "-"})


def read_table(text, header, min_rows=1):
    """Parse CSV ``text`` whose first row must equal ``header``.

    Returns one float array per column.  Blank lines and lines starting
    with ``#`` are skipped.
    """
    rows = [r for r in csv.reader(io.StringIO(text))
            if r and any(c.strip() for c in r) and not r[0].lstrip().startswith("#")]
    if not rows:
        raise InputError("empty file")
    got = tuple(c.strip().lower() for c in rows[0])
    if got != tuple(header):
        raise InputError(f"expected header {','.join(header)!s}, got {','.join(got)!s}")
    data = []
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise InputError(f"expected {len(header)} columns, got {len(row)}", row=i)
        vals = []
        for cell in row:
            try:
                v = float(cell.strip().translate(_MINUS))
            except ValueError:
                raise InputError(f"cannot parse {cell!r} as a number", row=i) from None
            if not math.isfinite(v):
                raise InputError(f"non-finite value {cell!r}", row=i)
            vals.append(v)
        data.append(vals)
    if len(data) < min_rows:
        raise InputError(f"need at least {min_rows} data rows, got {len(data)}")
    arr = np.array(data, dtype=float).reshape(len(data), len(header))
    return tuple(arr[:, j].copy() for j in range(len(header)))


def check_increasing(x, what):
    bad = np.nonzero(np.diff(x) <= 0)[0]
    if bad.size:
        i = int(bad[0]) + 2
        raise InputError(f"{what} must be strictly increasing "
                         f"({x[i - 2]!r} followed by {x[i - 1]!r})", row=i)


def check_nonnegative(y, what):
    bad = np.nonzero(y < 0)[0]
    if bad.size:
        i = int(bad[0])
        raise InputError(f"negative {what} {y[i]!r}", row=i + 1)


def read_file(path, header, min_rows=1):
    with open(path, encoding="utf-8") as fh:
        return read_table(fh.read(), header, min_rows)


def format_table(header, columns):
    """CSV text with floats written in round-trip (repr) precision."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([repr(float(v)) for v in row])
    return out.getvalue()
