"""File formats: .lrml binary matrices, CSV export, PGM frame stacks,
and per-iteration metrics CSV.

The .lrml format is magic ``LRML``, little-endian u32 version (currently 1),
u64 rows, u64 cols, then the payload as little-endian float64 in column-major
order.  Frames are binary 8-bit PGM (P5); video-style stacks store one frame
per column with pixels in column-major order within the frame.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix
from .pcp import IterationRecord

_MAGIC = b"LRML"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

METRICS_COLUMNS = ("iter", "feasibility_gap", "objective", "rank_l",
                   "sparsity_s", "wall_seconds")


class FormatError(ValueError):
    """Input bytes do not conform to the expected file format."""


@dataclass
class FrameStack:
    """Image sequence flattened into a matrix, one frame per column.

    Pixel ``(row, col)`` of frame ``j`` lives at matrix row
    ``row + col * frame_height`` (column-major within the frame).
    """

    frame_height: int
    frame_width: int
    count: int
    matrix: np.ndarray


def save_matrix(x, path):
    """Write a matrix in the .lrml binary format (bit-exact round trip)."""
    x = as_matrix(x)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, x.shape[0], x.shape[1]))
        fh.write(np.asfortranarray(x).tobytes(order="F"))


def load_matrix(path):
    """Read an .lrml file back into a float64 matrix."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if rows < 1 or cols < 1:
            raise FormatError(f"{path}: invalid dimensions {rows}x{cols}")
        payload = fh.read(8 * rows * cols + 1)
    if len(payload) != 8 * rows * cols:
        raise FormatError(f"{path}: payload size mismatch")
    data = np.frombuffer(payload, dtype="<f8")
    return data.reshape((rows, cols), order="F").copy()


def save_matrix_csv(x, path):
    """Plain CSV export, one row per line, 17 significant digits."""
    x = as_matrix(x)
    with open(path, "w") as fh:
        for row in x:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_matrix_csv(path):
    x = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    return as_matrix(x)


def _read_pgm_token(fh):
    # Tokens are separated by whitespace; '#' starts a comment to end of line.
    token = b""
    while True:
        ch = fh.read(1)
        if ch == b"":
            raise FormatError("unexpected end of PGM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_pgm(path):
    """Read a binary 8-bit PGM (P5) into a (height, width) uint8 array."""
    with open(path, "rb") as fh:
        if fh.read(2) != b"P5":
            raise FormatError(f"{path}: not a binary PGM (P5) file")
        width = int(_read_pgm_token(fh))
        height = int(_read_pgm_token(fh))
        maxval = int(_read_pgm_token(fh))
        if maxval != 255:
            raise FormatError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
        raster = fh.read(width * height)
    if len(raster) != width * height:
        raise FormatError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape((height, width))


def write_pgm(pixels, path):
    """Write a (height, width) uint8 array as canonical binary PGM."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ValueError("pixels must be 2-D")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes(order="C"))


def ingest_frames(paths):
    """Stack grayscale PGM frames into a matrix, one column per frame.

    All frames must share dimensions; pixel values are scaled to [0, 1].
    """
    paths = list(paths)
    if not paths:
        raise ValueError("no frames given")
    columns = []
    height = width = None
    for path in paths:
        frame = read_pgm(path)
        if height is None:
            height, width = frame.shape
        elif frame.shape != (height, width):
            raise ValueError(
                f"{path}: frame is {frame.shape[0]}x{frame.shape[1]}, "
                f"expected {height}x{width}"
            )
        columns.append(frame.astype(np.float64).ravel(order="F") / 255.0)
    return FrameStack(frame_height=height, frame_width=width,
                      count=len(paths), matrix=np.column_stack(columns))


def _quantize(column, height, width):
    # clamp to [0, 1], then 8-bit with round-half-up
    frame = column.reshape((height, width), order="F")
    frame = np.minimum(np.maximum(frame, 0.0), 1.0)
    return np.floor(frame * 255.0 + 0.5).astype(np.uint8)


def emit_frames(stack, l, s, out_dir):
    """Write per-frame PGM images of the low-rank and sparse components.

    Values are clamped to [0, 1] and quantized round-half-up to 8 bits, so
    feeding back the ingested stack reproduces the input bytes exactly.
    Returns the list of written paths.
    """
    l = as_matrix(l, "l")
    s = as_matrix(s, "s")
    if l.shape != stack.matrix.shape or s.shape != stack.matrix.shape:
        raise ValueError("component shapes do not match the frame stack")
    os.makedirs(out_dir, exist_ok=True)
    digits = max(4, len(str(stack.count - 1)))
    written = []
    for j in range(stack.count):
        for tag, mat in (("l", l), ("s", s)):
            path = os.path.join(out_dir, f"{tag}_{j:0{digits}d}.pgm")
            write_pgm(_quantize(mat[:, j], stack.frame_height,
                                stack.frame_width), path)
            written.append(path)
    return written


def write_metrics(history, path):
    """Per-iteration telemetry as CSV with 17-significant-digit floats."""
    with open(path, "w") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for rec in history:
            fh.write(
                f"{rec.iter},{rec.feasibility_gap:.17g},{rec.objective:.17g},"
                f"{rec.rank_l},{rec.sparsity_s:.17g},{rec.wall_seconds:.17g}\n"
            )


def read_metrics(path):
    """Parse a metrics CSV back into IterationRecord objects."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ",".join(METRICS_COLUMNS):
            raise FormatError(f"{path}: unexpected metrics header {header!r}")
        records = []
        for line in fh:
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != len(METRICS_COLUMNS):
                raise FormatError(f"{path}: malformed row {line!r}")
            records.append(IterationRecord(
                iter=int(parts[0]),
                feasibility_gap=float(parts[1]),
                objective=float(parts[2]),
                rank_l=int(parts[3]),
                sparsity_s=float(parts[4]),
                wall_seconds=float(parts[5]),
            ))
    return records
