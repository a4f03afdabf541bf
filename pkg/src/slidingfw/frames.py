"""Flat binary frame files.

Layout (little endian): 8-byte magic ``SFWFRM01``, uint64 ``M``, uint64
frame count, then ``count * M`` float64 values, frame after frame.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFWFRM01"
_HEADER = struct.Struct("<8sQQ")


class FrameFileError(ValueError):
    pass


def write_frames(path, frames) -> None:
    arr = np.asarray(frames, dtype="<f8")
    if arr.ndim == 1:
        arr = arr[None, :]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, arr.shape[1], arr.shape[0]))
        fh.write(arr.tobytes(order="C"))


def read_frames(path) -> np.ndarray:
    """(count, M) array; raises :class:`FrameFileError` on a malformed file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FrameFileError(f"{path}: truncated header")
    magic, m, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FrameFileError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * m * count
    if len(data) != expected:
        raise FrameFileError(f"{path}: expected {expected} bytes, found {len(data)}")
    out = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(count, m)
    return out.astype(float)


def read_header(path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise FrameFileError(f"{path}: truncated header")
    magic, m, count = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FrameFileError(f"{path}: bad magic {magic!r}")
    return int(m), int(count)


def frame_index(path, fallback: int) -> int:
    """Trailing integer of the file stem, e.g. ``frame_0012.bin -> 12``."""
    match = re.search(r"(\d+)$", Path(path).stem)
    return int(match.group(1)) if match else fallback


def frame_filename(frame: int) -> str:
    return f"frame_{frame:05d}.bin"
