"""Output files: CSV tables, lifted matrices and text reports.

All writes go to a temporary file in the target directory and are renamed
into place, so a reader never sees a half-written file. Floats are written
with 17 significant digits, which round-trips IEEE doubles exactly.
"""

import csv
import io
import os
import tempfile


def fmt(value):
    return format(float(value), ".17g")


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    if header is not None:
        writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write_text(path, csv_text(header, rows))


def write_matrix_csv(path, matrix, basis):
    """Lifted matrix with its monomial basis as row and column labels."""
    labels = basis.labels()
    rows = [[label] + [float(v) for v in row] for label, row in zip(labels, matrix)]
    write_csv(path, ["basis"] + labels, rows)


def read_matrix_csv(path):
    """Inverse of `write_matrix_csv`; returns ``(labels, matrix)``."""
    import numpy as np

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    return labels, np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def write_cycles_csv(path, cycles):
    """One row per cycle: ``cycle_index, R, mode_1, duration_1, ...``.

    Rows are padded with empty fields to the longest cycle.
    """
    width = max(len(c.segments) for c in cycles)
    header = ["cycle_index", "R"]
    for k in range(1, width + 1):
        header += [f"mode_{k}", f"duration_{k}"]
    rows = []
    for i, c in enumerate(cycles):
        row = [i, float(c.length)]
        for mode, d in c.segments:
            row += [mode, float(d)]
        row += [""] * (len(header) - len(row))
        rows.append(row)
    write_csv(path, header, rows)


def write_sweep_csv(path, sweep):
    rows = [[float(t), float(r), v] for t, r, v in zip(sweep.thetas, sweep.rhos, sweep.verdicts)]
    write_csv(path, ["theta", "rho", "verdict"], rows)


def write_paths_csv(path, times, paths):
    header = ["t"] + [f"path_{k}" for k in range(len(paths))]
    rows = [[float(t)] + [float(p[j]) for p in paths] for j, t in enumerate(times)]
    write_csv(path, header, rows)


def write_ensemble_csv(path, summary):
    rows = [[float(t), float(mu), float(se)]
            for t, mu, se in zip(summary.times, summary.mean, summary.stderr)]
    write_csv(path, ["t", "mean", "stderr"], rows)


def write_report(path, lines):
    atomic_write_text(path, "".join(line + "\n" for line in lines))
