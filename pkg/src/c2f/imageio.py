"""PGM/PNG images, CSV tables and atomic file output."""

from __future__ import annotations

import csv
import io
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidInput

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".png")


def atomic_write(path, data: bytes):
    """Write ``data`` to ``path`` via a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    atomic_write(path, buf.getvalue().encode())


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInput(f"{path}: empty CSV")
    return rows[0], rows[1:]


# --- PGM -----------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_tokens(data: bytes, count: int, pos: int = 0):
    out = []
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise InvalidInput("truncated PGM header")
        out.append(m.group(1))
        pos = m.end()
    return out, pos


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode a P2 (ASCII) or P5 (binary) PGM into ``(pixels, maxval)``."""
    (magic,), pos = _pgm_tokens(data, 1)
    if magic not in (b"P2", b"P5"):
        raise InvalidInput(f"not a P2/P5 PGM (magic {magic!r})")
    (w, h, maxval), pos = _pgm_tokens(data, 3, pos)
    w, h, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 65536) or w <= 0 or h <= 0:
        raise InvalidInput(f"bad PGM header: {w}x{h}, maxval {maxval}")
    if magic == b"P2":
        body = data[pos:].split()
        if len(body) < w * h:
            raise InvalidInput("truncated P2 pixel data")
        img = np.array([int(t) for t in body[: w * h]], dtype=np.int64)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        n = w * h * dtype.itemsize
        if len(data) - pos < n:
            raise InvalidInput("truncated P5 pixel data")
        img = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(np.int64)
    if img.max(initial=0) > maxval:
        raise InvalidInput("PGM pixel exceeds maxval")
    return img.reshape(h, w), maxval


def encode_pgm(img: np.ndarray, binary: bool = True) -> bytes:
    img = np.asarray(img)
    if img.ndim != 2:
        raise InvalidInput(f"PGM needs a 2D array, got shape {img.shape}")
    img = img.astype(np.int64)
    maxval = 255 if img.max(initial=0) <= 255 else 65535
    h, w = img.shape
    if binary:
        dtype = "u1" if maxval == 255 else ">u2"
        return f"P5\n{w} {h}\n{maxval}\n".encode() + img.astype(dtype).tobytes()
    lines = [" ".join(str(v) for v in row) for row in img]
    return (f"P2\n{w} {h}\n{maxval}\n" + "\n".join(lines) + "\n").encode()


def write_pgm(path, img, binary: bool = True):
    atomic_write(path, encode_pgm(img, binary))


def write_png(path, img):
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(buf, format="PNG")
    atomic_write(path, buf.getvalue())


def read_image(path) -> np.ndarray:
    """Grayscale image scaled to ``[-1, 1]`` (``0 -> -1``, ``maxval -> +1``)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        img, maxval = decode_pgm(path.read_bytes())
        return img.astype(float) * (2.0 / maxval) - 1.0
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=float)
            return arr * (2.0 / 65535.0) - 1.0
        arr = np.asarray(im.convert("L"), dtype=float)
    return arr * (2.0 / 255.0) - 1.0


def to_uint8(x) -> np.ndarray:
    """Map ``[-1, 1]`` to ``0..255``, clamping outside values."""
    x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return np.round((x + 1.0) * 127.5).astype(np.uint8)


def resize(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize to ``size x size`` (whole image, no cropping)."""
    if img.shape == (size, size):
        return img.astype(float)
    im = Image.fromarray(np.asarray(img, dtype=np.float32), mode="F")
    return np.asarray(im.resize((size, size), Image.BILINEAR), dtype=float)


@dataclass
class ImageDataset:
    items: np.ndarray  # (M, n, n) in [-1, 1]
    sources: list = field(default_factory=list)

    def __len__(self):
        return len(self.items)


def load_image_folder(path, target_size: int) -> ImageDataset:
    """Load every readable PGM/PNG under ``path`` (sorted by name)."""
    path = Path(path)
    if not path.is_dir():
        raise InvalidInput(f"not a directory: {path}")
    items, sources = [], []
    for f in sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
        try:
            img = read_image(f)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", f, exc)
            continue
        items.append(np.clip(resize(img, target_size), -1.0, 1.0))
        sources.append(str(f))
    if not items:
        raise InvalidInput(f"no readable PGM/PNG images in {path}")
    return ImageDataset(items=np.stack(items), sources=sources)


def as_image(field: np.ndarray) -> np.ndarray:
    """2D view of a field; 1D vectors become a single row."""
    field = np.asarray(field)
    return field[None, :] if field.ndim == 1 else field


def image_grid(fields, ncols: int | None = None, pad: int = 1, pad_value: float = -1.0) -> np.ndarray:
    """Tile fields (in ``[-1, 1]``) into one uint8 image."""
    tiles = [as_image(f) for f in fields]
    if not tiles:
        raise InvalidInput("nothing to tile")
    h, w = tiles[0].shape
    n = len(tiles)
    ncols = n if ncols is None else max(1, min(ncols, n))
    nrows = -(-n // ncols)
    grid = np.full((nrows * (h + pad) + pad, ncols * (w + pad) + pad), pad_value)
    for k, t in enumerate(tiles):
        r, c = divmod(k, ncols)
        grid[pad + r * (h + pad): pad + r * (h + pad) + h, pad + c * (w + pad): pad + c * (w + pad) + w] = t
    return to_uint8(grid)


def write_fields_csv(path, fields: np.ndarray, n_field_dims: int):
    """One row per field, columns ``p_<r>[_<c>]`` in row-major order."""
    fields = np.asarray(fields, dtype=float)
    shape = fields.shape[fields.ndim - n_field_dims:]
    names = ["p_" + "_".join(str(v) for v in idx) for idx in np.ndindex(*shape)]
    flat = fields.reshape(-1, int(np.prod(shape)))
    write_csv(path, ["sample"] + names, ([k] + list(row) for k, row in enumerate(flat)))


def read_fields_csv(path) -> np.ndarray:
    header, rows = read_csv(path)
    cols = header[1:]
    if not cols or not all(c.startswith("p_") for c in cols):
        raise InvalidInput(f"{path}: not a field CSV")
    idx = np.array([[int(v) for v in c[2:].split("_")] for c in cols])
    shape = tuple(idx.max(axis=0) + 1)
    data = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    return data.reshape((len(rows),) + shape)


def load_fields(path, target_size: int | None = None) -> np.ndarray:
    """Fields from a directory (``samples.csv`` preferred, else images) or a CSV."""
    path = Path(path)
    if path.is_file():
        return read_fields_csv(path)
    csv_path = path / "samples.csv"
    if csv_path.exists():
        return read_fields_csv(csv_path)
    if target_size is None:
        raise InvalidInput(f"{path}: no samples.csv and no target size for images")
    return load_image_folder(path, target_size).items
