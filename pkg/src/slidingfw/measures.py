"""Discrete Radon measures: finite sums of weighted Dirac masses."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np


class UndefinedInputError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    """``sum_i a_i delta_{x_i}`` with amplitudes ``a`` (N,) and positions ``x`` (N, d).

    Spikes keep insertion order. Instances are immutable; arrays are copied
    and flagged read-only at construction.
    """

    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=float).reshape(-1)
        x = np.array(self.positions, dtype=float)
        if x.ndim == 1:
            x = x.reshape(a.size, -1) if a.size else x.reshape(0, max(x.size, 1))
        if x.shape[0] != a.size:
            raise ValueError(
                f"{a.size} amplitudes but {x.shape[0]} positions"
            )
        a.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "positions", x)

    @classmethod
    def empty(cls, dim: int = 1) -> "DiscreteMeasure":
        return cls(np.zeros(0), np.zeros((0, dim)))

    @property
    def n_spikes(self) -> int:
        return self.amplitudes.size

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self):
        return self.n_spikes

    def __iter__(self):
        return iter(zip(self.amplitudes, self.positions))

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if self.n_spikes and other.n_spikes and self.dim != other.dim:
            raise ValueError("cannot add measures of different dimension")
        dim = self.dim if self.n_spikes else other.dim
        return DiscreteMeasure(
            np.concatenate([self.amplitudes, other.amplitudes]),
            np.concatenate([self.positions.reshape(-1, dim),
                            other.positions.reshape(-1, dim)]),
        )

    def __mul__(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(c * self.amplitudes, self.positions)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def tv_norm(m: DiscreteMeasure) -> float:
    """Total variation norm, i.e. the l1 norm of the amplitudes."""
    return float(np.sum(np.abs(m.amplitudes)))


def prune(m: DiscreteMeasure, eps_a: float = 0.0) -> DiscreteMeasure:
    """Drop spikes with ``|a_i| <= eps_a``; surviving spikes keep their order."""
    if eps_a < 0:
        raise ValueError("eps_a must be nonnegative")
    keep = np.abs(m.amplitudes) > eps_a
    return DiscreteMeasure(m.amplitudes[keep], m.positions[keep])


def min_separation(m: DiscreteMeasure) -> float:
    """Smallest Euclidean distance between two distinct spikes."""
    if m.n_spikes < 2:
        raise UndefinedInputError("minimum separation needs at least 2 spikes")
    x = m.positions
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    iu = np.triu_indices(m.n_spikes, k=1)
    return float(dist[iu].min())


# -- localization CSV ------------------------------------------------------

_AXES = ("x1", "x2", "x3")


def write_localizations(
    fh: TextIO, frames: Iterable[tuple[int, DiscreteMeasure]], dim: int
) -> None:
    """Write ``frame,amplitude,x1[,x2,x3]`` rows, one per spike."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["frame", "amplitude", *_AXES[:dim]])
    for frame, m in frames:
        for a, x in m:
            writer.writerow([int(frame), repr(float(a)), *(repr(float(v)) for v in x)])


def read_localizations(fh: TextIO) -> tuple[dict[int, DiscreteMeasure], int]:
    """Parse a localization CSV into ``{frame: measure}`` and the spatial dimension."""
    reader = csv.reader(fh)
    header = next(reader)
    if header[:2] != ["frame", "amplitude"]:
        raise ValueError(f"unexpected localization header {header!r}")
    dim = len(header) - 2
    if dim not in (1, 3) or header[2:] != list(_AXES[:dim]):
        raise ValueError(f"unexpected localization header {header!r}")
    rows: dict[int, tuple[list, list]] = {}
    for row in reader:
        if not row:
            continue
        frame = int(row[0])
        amps, pos = rows.setdefault(frame, ([], []))
        amps.append(float(row[1]))
        pos.append([float(v) for v in row[2:]])
    out = {
        f: DiscreteMeasure(np.array(a), np.array(p).reshape(-1, dim))
        for f, (a, p) in sorted(rows.items())
    }
    return out, dim
