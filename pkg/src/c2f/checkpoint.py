"""Versioned model checkpoints with an embedded configuration fingerprint.

Layout: a magic line, one JSON header line, then the raw little-endian
float64 payload of every array in header order.  The header carries a
SHA-256 of the payload.  Output is byte-identical for identical models.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import FingerprintMismatch, InvalidInput
from .imageio import atomic_write

MAGIC = b"C2F-CHECKPOINT"
VERSION = 1


def model_fingerprint(schedule, kind: str, hyper: dict | None = None) -> dict:
    fp = dict(schedule.fingerprint())
    fp["model"] = kind
    for k, v in sorted((hyper or {}).items()):
        fp[f"model.{k}"] = v
    return fp


def save_checkpoint(path, kind: str, fingerprint: dict, arrays: dict, extra: dict | None = None):
    names = sorted(arrays)
    payload = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    header = {
        "version": VERSION,
        "model": kind,
        "fingerprint": fingerprint,
        "arrays": [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names],
        "sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    atomic_write(path, MAGIC + b" %d\n" % VERSION + line + b"\n" + payload)


def load_checkpoint(path) -> tuple:
    """Return ``(header, arrays)``; raises ``InvalidInput`` on corruption."""
    data = Path(path).read_bytes()
    first, _, rest = data.partition(b"\n")
    parts = first.split()
    if len(parts) != 2 or parts[0] != MAGIC:
        raise InvalidInput(f"{path}: not a checkpoint file")
    if int(parts[1]) != VERSION:
        raise InvalidInput(f"{path}: unsupported checkpoint version {parts[1].decode()}")
    line, _, payload = rest.partition(b"\n")
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: corrupted header ({exc})") from None
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise InvalidInput(f"{path}: payload checksum mismatch")
    arrays, pos = {}, 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=pos)
        arrays[spec["name"]] = arr.reshape(shape).astype(float)
        pos += count * 8
    if pos != len(payload):
        raise InvalidInput(f"{path}: payload size does not match header")
    return header, arrays


def verify_fingerprint(header: dict, expected: dict):
    found = header.get("fingerprint", {})
    differing = {
        k: (found.get(k), expected.get(k))
        for k in set(found) | set(expected)
        if found.get(k) != expected.get(k)
    }
    if differing:
        raise FingerprintMismatch(differing)
