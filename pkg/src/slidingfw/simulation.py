"""Synthetic SMLM data: filament phantom, activation frames and camera noise.

All randomness goes through numpy's ``Generator(PCG64)`` seeded by a
``SeedSequence`` built from integer keys, so every stream is fixed by the
master seed and a small tuple of labels (see :func:`make_rng`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel
from .measures import DiscreteMeasure

log = logging.getLogger(__name__)

# stream labels for make_rng
STREAM_PHANTOM = 0
STREAM_PARTITION = 1
STREAM_NOISE = 2

DEFAULT_BOX = (6.4, 6.4, 0.8)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for the stream ``(seed, *keys)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


# Cubic space curves t -> sum_j c_j t^j, t in [0, 1]; rows are (x1, x2, x3)
# coefficient vectors (c0, c1, c2, c3). They stay at least 0.05 um inside
# the default box so the 10 nm jitter never leaves it.
DEFAULT_CURVES: tuple[np.ndarray, ...] = (
    np.array([[0.4, 5.2, 0.0, 0.0], [0.6, 3.0, 1.2, -1.4], [0.1, 0.9, -0.6, 0.2]]),
    np.array([[5.8, -4.0, -1.6, 0.9], [0.5, 2.8, 1.9, -1.5], [0.7, -0.3, -0.6, 0.35]]),
    np.array([[1.0, 2.0, 3.5, -2.6], [5.8, -2.0, -1.9, 0.6], [0.4, 0.6, -1.0, 0.3]]),
    np.array([[3.2, 1.5, -4.2, 3.0], [0.3, 4.0, 1.5, -0.4], [0.08, 0.3, 0.6, -0.5]]),
)


def eval_curve(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(len(t), 3) points of a polynomial curve."""
    t = np.asarray(t, dtype=float)
    powers = t[:, None] ** np.arange(coeffs.shape[1])
    return powers @ coeffs.T


@dataclass(frozen=True)
class Phantom:
    positions: np.ndarray
    seed: int

    def __len__(self):
        return self.positions.shape[0]


def generate_phantom(n_total: int, seed: int, curves=DEFAULT_CURVES,
                     radius: float = 0.01, box=DEFAULT_BOX, n_nodes: int = 2001) -> Phantom:
    """Sample ``n_total`` molecules along ``curves``.

    Points are uniform in arc length on a piecewise-linear reparametrization
    (``n_nodes`` nodes per curve) of the concatenated curves, then moved
    uniformly inside a ball of radius ``radius``.

    Raises
    ------
    ValueError
        If a curve or a jittered point leaves ``[0, box]``.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    box = np.asarray(box, dtype=float)
    t = np.linspace(0.0, 1.0, n_nodes)
    segments = []
    for c in curves:
        pts = eval_curve(np.asarray(c, dtype=float), t)
        if np.any(pts < radius) or np.any(pts > box - radius):
            raise ValueError("curve leaves the domain box")
        segments.append((pts[:-1], pts[1:]))
    starts = np.concatenate([s for s, _ in segments])
    ends = np.concatenate([e for _, e in segments])
    lengths = np.linalg.norm(ends - starts, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])

    rng = make_rng(seed, STREAM_PHANTOM)
    u = rng.uniform(0.0, cum[-1], size=n_total)
    seg = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, lengths.size - 1)
    frac = (u - cum[seg]) / np.where(lengths[seg] > 0, lengths[seg], 1.0)
    pts = starts[seg] + frac[:, None] * (ends[seg] - starts[seg])

    if radius > 0:
        direction = rng.standard_normal((n_total, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        rad = radius * rng.uniform(size=n_total) ** (1.0 / 3.0)
        pts = pts + rad[:, None] * direction
    if np.any(pts < 0) or np.any(pts > box):
        raise ValueError("jittered molecule outside the domain box")
    return Phantom(pts, int(seed))


@dataclass(frozen=True)
class ActivationSet:
    frame: int
    measure: DiscreteMeasure


def partition_activations(phantom: Phantom, n_per_frame: int, seed: int,
                          amp_range=(1.0, 1.5)) -> list[ActivationSet]:
    """Shuffle the phantom and cut it into frames of ``n_per_frame`` molecules."""
    n = len(phantom)
    if n_per_frame < 1 or n_per_frame > n:
        raise ValueError(f"n_per_frame must be in [1, {n}]")
    n_frames, extra = divmod(n, n_per_frame)
    if extra:
        log.warning("dropping %d molecules that do not fill a frame", extra)
    rng = make_rng(seed, STREAM_PARTITION)
    order = rng.permutation(n)[: n_frames * n_per_frame]
    amps = rng.uniform(amp_range[0], amp_range[1], size=order.size)
    out = []
    for f in range(n_frames):
        sl = slice(f * n_per_frame, (f + 1) * n_per_frame)
        out.append(ActivationSet(f, DiscreteMeasure(amps[sl], phantom.positions[order[sl]])))
    return out


def render_noiseless(kernel: Kernel, m0: DiscreteMeasure) -> np.ndarray:
    return kernel.forward(m0)


@dataclass(frozen=True)
class NoiseConfig:
    n_photon: float = 1000.0
    variance: float = 1e-4

    def __post_init__(self):
        if not self.n_photon > 0:
            raise ValueError("n_photon must be positive")
        if self.variance < 0:
            raise ValueError("variance must be non-negative")


def photon_scale(y0: np.ndarray, n_planes: int, n_photon: float) -> float:
    """Factor making the largest per-pixel sum over planes equal ``n_photon``."""
    y0 = np.asarray(y0, dtype=float).reshape(n_planes, -1)
    if np.any(y0 < 0):
        raise ValueError("noiseless image must be non-negative")
    peak = float(y0.sum(axis=0).max())
    if peak <= 0:
        raise ValueError("cannot normalize an all-zero image")
    return n_photon / peak


def apply_noise(y0, cfg: NoiseConfig, rng: np.random.Generator, n_planes: int = 1):
    """Poisson + Gaussian camera noise after photon-budget scaling.

    Returns
    -------
    y : ndarray
        ``Poisson(c * y0) + N(0, variance)``.
    scale : float
        The scale factor ``c``.
    """
    y0 = np.asarray(y0, dtype=float)
    c = photon_scale(y0, n_planes, cfg.n_photon)
    y = rng.poisson(c * y0).astype(float)
    if cfg.variance > 0:
        y += np.sqrt(cfg.variance) * rng.standard_normal(y.shape)
    return y, c


def noisy_frame(kernel: Kernel, m0: DiscreteMeasure, cfg: NoiseConfig, seed: int,
                frame: int, n_planes: int = 1):
    """Render and noise one frame on its own stream ``(seed, noise, frame)``."""
    y0 = render_noiseless(kernel, m0)
    if not np.any(y0 > 0):
        return y0.copy(), 0.0
    return apply_noise(y0, cfg, make_rng(seed, STREAM_NOISE, frame), n_planes)
