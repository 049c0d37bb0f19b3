"""File formats: MatrixMarket observations, dense binary factors, PGM frames, CSV logs.

Every writer goes through a temporary file in the target directory followed by
an atomic rename, so a failed write never leaves a partial file behind.
"""
from contextlib import contextmanager
import csv
from dataclasses import dataclass
import os
from pathlib import Path
import tempfile

import numpy as np

from .errors import (
    DimensionMismatch,
    FormatError,
    InconsistentDimensions,
    ParseError,
    TruncatedFile,
)
from .observation import ObservationSet

MM_HEADER = "%%MatrixMarket matrix coordinate real general"
LOG_COLUMNS = ("iter", "elapsed_s", "F", "norm_dU_sq", "norm_dS_sq", "gamma", "epsilon", "rel_diff")


@contextmanager
def atomic_write(path, mode="wb"):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": ""})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


# -- MatrixMarket ---------------------------------------------------------------

def read_matrix_market(path):
    """Parse a coordinate real/integer general MatrixMarket file into an ObservationSet."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", "line 1")
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket":
        raise ParseError("missing %%MatrixMarket banner", "line 1")
    obj, fmt, field, symm = (h.lower() for h in head[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise ParseError(f"unsupported layout '{obj} {fmt}', need 'matrix coordinate'", "line 1")
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field '{field}'", "line 1")
    if symm != "general":
        raise ParseError(f"unsupported symmetry '{symm}'", "line 1")

    k = 1
    while k < len(lines) and (not lines[k].strip() or lines[k].lstrip().startswith("%")):
        k += 1
    if k == len(lines):
        raise TruncatedFile("missing size line", f"line {k + 1}")
    try:
        m, n, nnz = (int(t) for t in lines[k].split())
    except ValueError:
        raise ParseError(f"bad size line {lines[k]!r}", f"line {k + 1}") from None
    if m < 1 or n < 1 or nnz < 0:
        raise ParseError("sizes must be positive", f"line {k + 1}")

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    count = 0
    for lineno in range(k + 1, len(lines)):
        text = lines[lineno].strip()
        if not text or text.startswith("%"):
            continue
        if count == nnz:
            raise ParseError(f"more than {nnz} entries", f"line {lineno + 1}")
        parts = text.split()
        try:
            if len(parts) != 3:
                raise ValueError
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad entry {text!r}", f"line {lineno + 1}") from None
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count < nnz:
        raise TruncatedFile(f"expected {nnz} entries, found {count}", f"line {len(lines)}")
    # range, duplicate and finiteness checks live in the constructor
    return ObservationSet.from_arrays(m, n, rows, cols, vals)


def write_matrix_market(path, obs, values=None):
    """Write ``obs`` (or ``values`` on its pattern) with 1-based indices.

    Values use the shortest repr that round-trips exactly.
    """
    vals = obs.values if values is None else np.asarray(values, dtype=np.float64)
    if vals.shape != (obs.nnz,):
        raise DimensionMismatch(f"expected {obs.nnz} values, got {vals.shape}")
    with atomic_write(path, "w") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{obs.m} {obs.n} {obs.nnz}\n")
        fh.writelines(
            f"{i + 1} {j + 1} {v!r}\n"
            for i, j, v in zip(obs.rows.tolist(), obs.cols.tolist(), vals.tolist())
        )


# -- dense binary -----------------------------------------------------------------

def write_dense(path, matrix):
    """ASCII ``"rows cols\\n"`` header followed by row-major little-endian float64."""
    A = np.asarray(matrix, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {A.shape}")
    with atomic_write(path) as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(A, dtype="<f8").tobytes())


def read_dense(path):
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise ParseError("missing header line", "byte 0")
    try:
        rows, cols = (int(t) for t in data[:nl].decode("ascii").split())
    except (ValueError, UnicodeDecodeError):
        raise ParseError(f"bad header {data[:nl][:40]!r}", "byte 0") from None
    if rows < 0 or cols < 0:
        raise ParseError("negative dimensions in header", "byte 0")
    payload = len(data) - nl - 1
    if payload != 8 * rows * cols:
        raise TruncatedFile(
            f"header {rows}x{cols} needs {8 * rows * cols} payload bytes, found {payload}",
            f"byte {nl + 1}",
        )
    return np.frombuffer(data, dtype="<f8", offset=nl + 1).reshape(rows, cols).astype(np.float64)


# -- PGM frames -------------------------------------------------------------------

@dataclass(frozen=True)
class FrameStack:
    """Frames stacked as columns; each frame is flattened column-major."""

    width: int
    height: int
    frame_count: int
    pixels: np.ndarray

    def frame(self, j):
        return self.pixels[:, j].reshape(self.height, self.width, order="F")


def _pgm_header(data, path):
    # P5 <ws> width <ws> height <ws> maxval <single ws> raster; '#' comments allowed
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5)", "byte 0")
    fields = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise TruncatedFile(f"{path}: header ends early", f"byte {pos}")
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            if pos == start:
                raise FormatError(f"{path}: unexpected byte {c!r} in header", f"byte {pos}")
            fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"{path}: header must end in one whitespace byte", f"byte {pos}")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"{path}: empty image", "byte 2")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"{path}: maxval {maxval} outside [1, 65535]", "byte 2")
    return width, height, maxval, pos + 1


def read_pgm(path):
    """One P5 frame as ``(height x width array in [0, 1], maxval)``."""
    data = Path(path).read_bytes()
    width, height, maxval, offset = _pgm_header(data, path)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(data) - offset < need:
        raise TruncatedFile(f"{path}: raster needs {need} bytes, found {len(data) - offset}", f"byte {offset}")
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    if raw.max(initial=0) > maxval:
        raise FormatError(f"{path}: sample exceeds maxval {maxval}", f"byte {offset}")
    return raw.reshape(height, width).astype(np.float64) / maxval, maxval


def _frame_paths(dir_or_list):
    if isinstance(dir_or_list, (str, os.PathLike)):
        d = Path(dir_or_list)
        if not d.is_dir():
            raise FileNotFoundError(f"{d} is not a directory")
        paths = [p for p in d.iterdir() if p.is_file() and p.suffix.lower() == ".pgm"]
    else:
        paths = [Path(p) for p in dir_or_list]
    return sorted(paths, key=lambda p: p.name)


def read_pgm_stack(dir_or_list):
    """Read P5 frames (lexicographic filename order) into a :class:`FrameStack`."""
    paths = _frame_paths(dir_or_list)
    if not paths:
        raise FormatError("no PGM frames found")
    cols = []
    shape = None
    for p in paths:
        img, _ = read_pgm(p)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise InconsistentDimensions(
                f"{p.name} is {img.shape[1]}x{img.shape[0]}, expected {shape[1]}x{shape[0]}"
            )
        cols.append(img.ravel(order="F"))
    height, width = shape
    return FrameStack(width, height, len(cols), np.column_stack(cols))


def write_pgm(path, column, width, height, maxval=255):
    """Write one stacked column as a P5 frame, clamped to [0, 1] and rounded."""
    col = np.asarray(column, dtype=np.float64).ravel()
    if col.size != width * height:
        raise DimensionMismatch(f"column has {col.size} pixels, frame is {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must lie in [1, 65535]")
    img = col.reshape(height, width, order="F")
    q = np.rint(np.clip(np.nan_to_num(img), 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    with atomic_write(path) as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(q.astype(dtype).tobytes())


# -- convergence logs -------------------------------------------------------------

def _fmt(x):
    return "" if x is None else repr(float(x)) if not isinstance(x, int) else str(x)


def write_log(path, records):
    """CSV with the fixed column order; ``rel_diff`` is blank when absent."""
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for rec in records:
            w.writerow([
                str(rec.iter), _fmt(rec.elapsed), _fmt(rec.F), _fmt(rec.norm_dU_sq),
                _fmt(rec.norm_dS_sq), _fmt(rec.gamma), _fmt(rec.epsilon), _fmt(rec.rel_diff),
            ])


def read_log(path):
    """Rows of a convergence log as dicts of floats (``None`` for blanks)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
            raise ParseError(f"unexpected columns {reader.fieldnames}", "line 1")
        out = []
        for row in reader:
            rec = {k: (float(v) if v != "" else None) for k, v in row.items()}
            rec["iter"] = int(rec["iter"])
            out.append(rec)
    return out

