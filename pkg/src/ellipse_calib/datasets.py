"""CSV datasets, CIR snapshots and atomic file output.

Floats are written with ``repr`` so that writing and re-reading a dataset is
the identity.  All files are UTF-8 with LF line endings.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import SchemaError
from .geometry import Vec2
from .inference import Measurement
from .scenario import GroundTruth, RpTruth
from .signal_extract import SampledSignal

MEASUREMENT_HEADER = ("k", "time_s", "user_x_m", "user_y_m", "z_db")
GROUND_TRUTH_HEADER = ("link", "mpc", "rp_arc_m", "rp_x_m", "rp_y_m")
CIR_HEADER = ("index", "real", "imag")
FIT_HEADER = ("xi_tx_m", "xi_rx_m", "z_db")
GROUND_TRUTH_FILE = "ground_truth.csv"
_MEAS_NAME = re.compile(r"^link(\d+)_mpc(\d+)\.csv$")


def measurement_filename(link: int, mpc: int) -> str:
    return f"link{link}_mpc{mpc}.csv"


def parse_measurement_filename(name: str) -> tuple[int, int] | None:
    m = _MEAS_NAME.match(name)
    return (int(m.group(1)), int(m.group(2))) if m else None


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _read_rows(path: Path, header: Sequence[str], skip_comments: bool = False):
    """Yield ``(line_number, row)`` after checking the header; ``#`` lines are skipped on request."""
    try:
        fh = path.open(encoding="utf-8", newline="")
    except OSError as exc:
        raise SchemaError(f"cannot read: {exc.strerror}", str(path), None) from None
    with fh:
        lines = ((i + 1, ln) for i, ln in enumerate(fh))
        if skip_comments:
            lines = ((i, ln) for i, ln in lines if not ln.startswith("#"))
        lines = list(lines)
    if not lines:
        raise SchemaError("empty file, expected header " + ",".join(header), str(path), 1)
    first_line, head = lines[0]
    got = next(csv.reader([head]))
    if [h.strip() for h in got] != list(header):
        raise SchemaError(f"expected header {','.join(header)}, got {','.join(got)}",
                          str(path), first_line)
    for ln, text in lines[1:]:
        if not text.strip():
            continue
        row = next(csv.reader([text]))
        if len(row) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(row)}", str(path), ln)
        yield ln, row


def _float(s: str, path: Path, ln: int, col: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise SchemaError(f"column {col}: not a number: {s!r}", str(path), ln) from None
    if not np.isfinite(v):
        raise SchemaError(f"column {col}: value must be finite", str(path), ln)
    return v


def _int(s: str, path: Path, ln: int, col: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise SchemaError(f"column {col}: not an integer: {s!r}", str(path), ln) from None


# --------------------------------------------------------------------------
# Measurements and ground truth


def measurements_text(ms: Sequence[Measurement], times: Sequence[float]) -> str:
    return csv_text(MEASUREMENT_HEADER,
                    ((m.k, t, m.user[0], m.user[1], m.z) for m, t in zip(ms, times)))


def read_measurements(path: str | Path) -> tuple[list[Measurement], np.ndarray]:
    """Measurements and their times; ``k`` must increase strictly."""
    path = Path(path)
    ms, times = [], []
    last = None
    for ln, row in _read_rows(path, MEASUREMENT_HEADER):
        k = _int(row[0], path, ln, "k")
        if last is not None and k <= last:
            raise SchemaError("k must increase strictly", str(path), ln)
        last = k
        t, x, y, z = (_float(v, path, ln, c) for v, c in zip(row[1:], MEASUREMENT_HEADER[1:]))
        ms.append(Measurement(k, z, Vec2(x, y)))
        times.append(t)
    return ms, np.asarray(times)


def ground_truth_text(gt: GroundTruth) -> str:
    return csv_text(GROUND_TRUTH_HEADER,
                    ((t.link, t.mpc, t.arc, t.point[0], t.point[1]) for t in gt))


def read_ground_truth(path: str | Path) -> GroundTruth:
    path = Path(path)
    gt = GroundTruth()
    for ln, row in _read_rows(path, GROUND_TRUTH_HEADER):
        link, mpc = _int(row[0], path, ln, "link"), _int(row[1], path, ln, "mpc")
        arc, x, y = (_float(v, path, ln, c) for v, c in zip(row[2:], GROUND_TRUTH_HEADER[2:]))
        if (link, mpc) in gt.entries:
            raise SchemaError(f"duplicate entry for link {link} mpc {mpc}", str(path), ln)
        gt.entries[(link, mpc)] = RpTruth(link, mpc, arc, Vec2(x, y))
    return gt


# --------------------------------------------------------------------------
# CIR snapshots: "# sample_interval_s=<float>" then index,real,imag rows


def cir_text(sig: SampledSignal) -> str:
    body = csv_text(CIR_HEADER, ((i, v.real, v.imag) for i, v in enumerate(sig.samples)))
    return f"# sample_interval_s={sig.sample_interval!r}\n" + body


def read_cir(path: str | Path) -> SampledSignal:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise SchemaError(f"cannot read: {exc.strerror}", str(path), None) from None
    m = re.match(r"#\s*sample_interval_s\s*=\s*(\S+)\s*$", first)
    if not m:
        raise SchemaError("first line must be '# sample_interval_s=<seconds>'", str(path), 1)
    dt = _float(m.group(1), path, 1, "sample_interval_s")
    if dt <= 0:
        raise SchemaError("sample interval must be positive", str(path), 1)
    vals = []
    for ln, row in _read_rows(path, CIR_HEADER, skip_comments=True):
        if _int(row[0], path, ln, "index") != len(vals):
            raise SchemaError("indices must run 0, 1, 2, ...", str(path), ln)
        vals.append(complex(_float(row[1], path, ln, "real"), _float(row[2], path, ln, "imag")))
    if not vals:
        raise SchemaError("no samples", str(path), None)
    return SampledSignal(np.asarray(vals), dt)


# --------------------------------------------------------------------------
# Fitting input


def read_fit_samples(path: str | Path) -> np.ndarray:
    path = Path(path)
    rows = [[_float(v, path, ln, c) for v, c in zip(row, FIT_HEADER)]
            for ln, row in _read_rows(path, FIT_HEADER)]
    return np.asarray(rows, dtype=float).reshape(-1, 3)
