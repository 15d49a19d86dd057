"""Deterministic CSV writing: fixed column order, LF endings, no timestamps."""

import csv
import io
from pathlib import Path


def shortest(x):
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def sig12(x):
    return format(float(x), ".12g")


def render(header, rows, fmt=shortest):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write(path, header, rows, fmt=shortest):
    text = render(header, rows, fmt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return header, rows
