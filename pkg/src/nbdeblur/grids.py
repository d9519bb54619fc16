"""Grayscale image containers and file I/O.

Images live in memory as 2-D float64 arrays in row-major order; intensities
stay real-valued and are only quantized when written to an 8/16-bit
container.  Photon-count matrices get their own lossless text format because
overdispersed counts routinely exceed 255 and would be destroyed by an 8-bit
image container.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_FORMATS = ("pgm8", "pgm16", "png8")

_FORMAT_MAXVAL = {"pgm8": 255, "pgm16": 65535, "png8": 255}


def as_pixels(image) -> np.ndarray:
    """Return the 2-D float array behind an ImageGrid (arrays pass through)."""
    if isinstance(image, ImageGrid):
        return image.pixels
    return np.asarray(image, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """2-D grayscale intensity field, float64, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def clipped(self, lo: float = 0.0, hi: float | None = None) -> "ImageGrid":
        """Copy with pixels clamped to [lo, hi]."""
        return ImageGrid(np.clip(self.pixels, lo, hi))


@dataclass(frozen=True, eq=False)
class CountGrid:
    """2-D field of nonnegative integer photon counts."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("counts must be a non-empty 2-D array")
        if not np.issubdtype(arr.dtype, np.integer):
            rounded = np.rint(arr)
            if not np.all(rounded == arr):
                raise ValueError("counts must be integers")
            arr = rounded
        arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", arr)

    @property
    def height(self) -> int:
        return self.counts.shape[0]

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def as_image(self) -> ImageGrid:
        return ImageGrid(self.counts.astype(np.float64))


# ---------------------------------------------------------------------------
# PGM (binary P5) reader/writer.  Hand-rolled: the format is tiny and we need
# byte-deterministic output and strict control over the 16-bit sample order
# (big-endian per the standard).
# ---------------------------------------------------------------------------


def _parse_pgm(data: bytes):
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) file")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ValueError("malformed PGM header: truncated")
        ch = data[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ValueError("malformed PGM header: unterminated comment")
            pos = nl + 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise ValueError("malformed PGM header: unexpected byte %r" % ch)
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos : pos + 1] not in b" \t\r\n":
        raise ValueError("malformed PGM header: missing raster separator")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0 or maxval <= 0:
        raise ValueError("malformed PGM header: non-positive dimension")
    return width, height, maxval, data[pos:]


def _load_pgm(path, bits: int) -> ImageGrid:
    data = Path(path).read_bytes()
    width, height, maxval, raster = _parse_pgm(data)
    if bits == 8:
        if maxval > 255:
            raise ValueError("unsupported bit depth: maxval %d needs pgm16" % maxval)
        dtype = np.dtype(">u1")
    else:
        if maxval <= 255:
            raise ValueError("unsupported bit depth: maxval %d is 8-bit data" % maxval)
        if maxval > 65535:
            raise ValueError("unsupported bit depth: maxval %d exceeds 16 bits" % maxval)
        dtype = np.dtype(">u2")
    need = height * width * dtype.itemsize
    if len(raster) < need:
        raise ValueError("malformed PGM: raster shorter than header promises")
    samples = np.frombuffer(raster[:need], dtype=dtype).reshape(height, width)
    return ImageGrid(samples.astype(np.float64))


def _save_pgm(samples: np.ndarray, path, maxval: int) -> None:
    height, width = samples.shape
    header = b"P5\n%d %d\n%d\n" % (width, height, maxval)
    dtype = np.dtype(">u1") if maxval <= 255 else np.dtype(">u2")
    Path(path).write_bytes(header + samples.astype(dtype).tobytes())


def load_image(path, format: str) -> ImageGrid:
    """Load a grayscale image; sample integers become float intensities as-is."""
    if format == "pgm8":
        return _load_pgm(path, 8)
    if format == "pgm16":
        return _load_pgm(path, 16)
    if format == "png8":
        with Image.open(path) as img:
            if img.mode != "L":
                raise ValueError("unsupported bit depth: PNG mode %s (need 8-bit gray)" % img.mode)
            return ImageGrid(np.asarray(img, dtype=np.float64))
    raise ValueError("unknown image format %r" % (format,))


def save_image(image, path, format: str, peak: float = 255.0) -> None:
    """Write pixels clamped to [0, peak] and linearly quantized to the format's range."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    if format not in IMAGE_FORMATS:
        raise ValueError("unknown image format %r" % (format,))
    pixels = as_pixels(image)
    maxval = _FORMAT_MAXVAL[format]
    quantized = np.rint(np.clip(pixels, 0.0, peak) / peak * maxval)
    if format == "pgm8":
        _save_pgm(quantized, path, 255)
    elif format == "pgm16":
        _save_pgm(quantized, path, 65535)
    else:
        Image.fromarray(quantized.astype(np.uint8), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Lossless text format for count matrices: "height width" on the first line,
# then one line of space-separated nonnegative integers per row.
# ---------------------------------------------------------------------------


def save_counts(grid: CountGrid, path) -> None:
    lines = ["%d %d" % (grid.height, grid.width)]
    lines.extend(" ".join(str(v) for v in row) for row in grid.counts)
    Path(path).write_text("\n".join(lines) + "\n")


def load_counts(path) -> CountGrid:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty counts file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("malformed counts header: expected 'height width'")
    height, width = int(head[0]), int(head[1])
    if height <= 0 or width <= 0:
        raise ValueError("malformed counts header: non-positive dimension")
    if len(lines) != height + 1:
        raise ValueError("malformed counts file: expected %d rows, found %d" % (height, len(lines) - 1))
    rows = []
    for ln in lines[1:]:
        row = [int(tok) for tok in ln.split()]
        if len(row) != width:
            raise ValueError("malformed counts row: expected %d entries, found %d" % (width, len(row)))
        if any(v < 0 for v in row):
            raise ValueError("negative entry in counts file")
        rows.append(row)
    return CountGrid(np.array(rows, dtype=np.int64))
