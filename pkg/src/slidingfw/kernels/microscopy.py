"""3-D SMLM forward models: astigmatism, double-helix and MA-TIRF.

Every model integrates Gaussian lobes over the camera pixels analytically
(per-axis differences of the normal CDF). Observations are laid out as
``(K, N1, N2)`` in C order, ``K`` being the number of focal planes or TIRF
angles; ``x1`` runs along the ``N1`` axis and ``x2`` along ``N2``.

Lengths are in microns, angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .base import ConfigurationError, Kernel

_SQRT2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class Optics:
    """Acquisition geometry and optics shared by all modalities."""

    b1: float = 6.4
    b2: float = 6.4
    b3: float = 0.8
    n1: int = 64
    n2: int = 64
    na: float = 1.49
    n_i: float = 1.515
    n_t: float = 1.333
    wavelength: float = 0.66

    def __post_init__(self):
        if min(self.b1, self.b2, self.b3) <= 0 or min(self.n1, self.n2) < 1:
            raise ConfigurationError("box sizes and detector grid must be positive")
        if not (self.n_i > self.n_t > 0):
            raise ConfigurationError("need n_i > n_t > 0 for total internal reflection")
        if self.na > self.n_i:
            raise ConfigurationError("numerical aperture cannot exceed n_i")

    @property
    def psf_sigma(self) -> float:
        return 0.42 * self.wavelength / self.na


def pixel_integrals(edges, center, sigma):
    """Mass of N(center, sigma^2) in each pixel ``[edges[i], edges[i+1]]``.

    ``center`` and ``sigma`` broadcast together to shape S; returns
    ``(value, d/dcenter, d/dsigma)``, each of shape S + (n_pixels,).
    """
    c = np.asarray(center, dtype=float)[..., None]
    s = np.asarray(sigma, dtype=float)[..., None]
    u = (edges - c) / s
    lo, hi = u[..., :-1], u[..., 1:]
    cdf, sf = ndtr(u), ndtr(-u)
    # integrate on the side of the tail that keeps the difference well conditioned
    val = np.where(lo > 0, sf[..., :-1] - sf[..., 1:], cdf[..., 1:] - cdf[..., :-1])
    pdf = np.exp(-0.5 * u**2) / _SQRT2PI
    plo, phi_ = pdf[..., :-1], pdf[..., 1:]
    dc = -(phi_ - plo) / s
    ds = -(phi_ * hi - plo * lo) / s
    return val, dc, ds


class _Lobes:
    """Per-plane Gaussian lobe parameters at depth(s) z, plus their z-derivatives.

    Arrays have shape z.shape + (K,). ``shift1/2`` are lateral offsets added
    to the molecule position, ``w`` the lobe weight.
    """

    __slots__ = ("shift1", "shift2", "sig1", "sig2", "w",
                 "dshift1", "dshift2", "dsig1", "dsig2", "dw")

    def __init__(self, **kw):
        for k in self.__slots__:
            setattr(self, k, kw[k])


class PixelatedGaussian3D(Kernel):
    """Shared pixel-integration machinery for the three SMLM modalities."""

    dim = 3
    name = "abstract"

    def __init__(self, optics: Optics, n_planes: int):
        if n_planes < 1:
            raise ConfigurationError("need at least one plane/angle")
        self.optics = optics
        self.n_planes = int(n_planes)
        self.lower = np.zeros(3)
        self.upper = np.array([optics.b1, optics.b2, optics.b3])
        self.edges1 = np.linspace(0.0, optics.b1, optics.n1 + 1)
        self.edges2 = np.linspace(0.0, optics.b2, optics.n2 + 1)

    @property
    def size(self) -> int:
        return self.n_planes * self.optics.n1 * self.optics.n2

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.n_planes, self.optics.n1, self.optics.n2)

    def lobes(self, z: np.ndarray) -> list[_Lobes]:
        raise NotImplementedError

    def _terms(self, x):
        x1, x2, z = x[:, 0], x[:, 1], x[:, 2]
        for lb in self.lobes(z):
            ex, dex_c, dex_s = pixel_integrals(self.edges1, x1[:, None] + lb.shift1, lb.sig1)
            ey, dey_c, dey_s = pixel_integrals(self.edges2, x2[:, None] + lb.shift2, lb.sig2)
            yield lb, ex, dex_c, dex_s, ey, dey_c, dey_s

    def phis(self, x):
        out = 0.0
        for lb, ex, _, _, ey, _, _ in self._terms(x):
            out = out + lb.w[:, :, None, None] * ex[:, :, :, None] * ey[:, :, None, :]
        return np.reshape(out, (x.shape[0], -1)).T

    def grad_phis(self, x):
        n = x.shape[0]
        g = np.zeros((n, 3) + self.image_shape)
        for lb, ex, dex_c, dex_s, ey, dey_c, dey_s in self._terms(x):
            w = lb.w[:, :, None, None]
            g[:, 0] += w * dex_c[:, :, :, None] * ey[:, :, None, :]
            g[:, 1] += w * ex[:, :, :, None] * dey_c[:, :, None, :]
            dex_z = dex_c * lb.dshift1[..., None] + dex_s * lb.dsig1[..., None]
            dey_z = dey_c * lb.dshift2[..., None] + dey_s * lb.dsig2[..., None]
            g[:, 2] += (
                lb.dw[:, :, None, None] * ex[:, :, :, None] * ey[:, :, None, :]
                + w * dex_z[:, :, :, None] * ey[:, :, None, :]
                + w * ex[:, :, :, None] * dey_z[:, :, None, :]
            )
        return np.moveaxis(g.reshape(n, 3, -1), 2, 0)

    def adjoint_grad(self, p, x):
        # contract the separable factors with p instead of forming gradient images
        pts = self.as_points(x)
        self.check_domain(pts)
        P = np.asarray(p, dtype=float).reshape(self.image_shape)
        g = np.zeros((pts.shape[0], 3))
        for lb, ex, dex_c, dex_s, ey, dey_c, dey_s in self._terms(pts):
            dex_z = dex_c * lb.dshift1[..., None] + dex_s * lb.dsig1[..., None]
            dey_z = dey_c * lb.dshift2[..., None] + dey_s * lb.dsig2[..., None]
            A = np.einsum("nki,kij->nkj", ex, P)
            B = np.einsum("nki,kij->nkj", dex_c, P)
            C = np.einsum("nki,kij->nkj", dex_z, P)
            w, dw = lb.w, lb.dw
            g[:, 0] += np.einsum("nk,nkj,nkj->n", w, B, ey)
            g[:, 1] += np.einsum("nk,nkj,nkj->n", w, A, dey_c)
            g[:, 2] += (np.einsum("nk,nkj,nkj->n", dw, A, ey)
                        + np.einsum("nk,nkj,nkj->n", w, C, ey)
                        + np.einsum("nk,nkj,nkj->n", w, A, dey_z))
        return g

    def adjoint_grid(self, p, axes):
        g1, g2, g3 = (np.asarray(a, dtype=float) for a in axes)
        P = np.asarray(p).reshape(self.image_shape)
        out = np.zeros((g1.size, g2.size, g3.size))
        for iz, z in enumerate(g3):
            for lb in self.lobes(np.array([z])):
                ex = pixel_integrals(self.edges1, g1[:, None] + lb.shift1, lb.sig1)[0]
                ey = pixel_integrals(self.edges2, g2[:, None] + lb.shift2, lb.sig2)[0]
                # ex: (G1, K, N1), ey: (G2, K, N2)
                tmp = np.einsum("akn,knm->akm", ex, P)
                out[:, :, iz] += np.einsum("akm,bkm,k->ab", tmp, ey, lb.w[0])
        return out

    def default_grid(self):
        o = self.optics
        c1 = 0.5 * (self.edges1[:-1] + self.edges1[1:])
        c2 = 0.5 * (self.edges2[:-1] + self.edges2[1:])
        return [c1, c2, np.linspace(0.0, o.b3, 32)]

    def focal_depths_default(self) -> np.ndarray:
        k = np.arange(1, self.n_planes + 1)
        return k * self.optics.b3 / (self.n_planes + 1)


class Astigmatism(PixelatedGaussian3D):
    """Elliptical Gaussian whose widths vary with defocus ``z - z_k``."""

    name = "astigmatism"

    def __init__(self, optics: Optics = Optics(), n_planes: int = 1, *, alpha: float = -0.79,
                 beta: float = 0.2, sigma0: float | None = None, dof: float | None = None,
                 focal_depths=None):
        super().__init__(optics, n_planes)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.sigma0 = optics.psf_sigma if sigma0 is None else float(sigma0)
        self.dof = (optics.wavelength * optics.n_i / (2 * optics.na**2)
                    if dof is None else float(dof))
        if self.sigma0 <= 0 or self.dof <= 0:
            raise ConfigurationError("sigma0 and dof must be positive")
        self.focal_depths = (self.focal_depths_default() if focal_depths is None
                             else np.asarray(focal_depths, dtype=float).reshape(-1))
        if self.focal_depths.size != self.n_planes:
            raise ConfigurationError("one focal depth per plane required")

    def _sigma1(self, z):
        t = (self.alpha * z - self.beta) / self.dof
        root = np.sqrt(1 + t**2)
        return self.sigma0 * root, self.sigma0 * t * self.alpha / (self.dof * root)

    def sigmas(self, z):
        """Widths ``(sigma1(z), sigma2(z))`` with ``sigma2(z) = sigma1(-z)``."""
        s1, _ = self._sigma1(np.asarray(z, dtype=float))
        s2, _ = self._sigma1(-np.asarray(z, dtype=float))
        return s1, s2

    def lobes(self, z):
        dz = z[:, None] - self.focal_depths[None, :]
        s1, ds1 = self._sigma1(dz)
        s2, ds2m = self._sigma1(-dz)
        zero = np.zeros_like(dz)
        return [_Lobes(shift1=zero, shift2=zero, sig1=s1, sig2=s2, w=np.ones_like(dz),
                       dshift1=zero, dshift2=zero, dsig1=ds1, dsig2=-ds2m, dw=zero)]


class DoubleHelix(PixelatedGaussian3D):
    """Two isotropic Gaussian lobes rotating about the molecule with depth."""

    name = "double-helix"

    def __init__(self, optics: Optics = Optics(), n_planes: int = 1, *, sigma: float | None = None,
                 omega: float = 1.0, theta_speed: float = 0.3846 * math.pi, focal_depths=None):
        super().__init__(optics, n_planes)
        self.sigma = optics.psf_sigma if sigma is None else float(sigma)
        self.omega = float(omega)
        self.theta_speed = float(theta_speed)
        if self.sigma <= 0 or self.omega <= 0:
            raise ConfigurationError("sigma and omega must be positive")
        self.focal_depths = (self.focal_depths_default() if focal_depths is None
                             else np.asarray(focal_depths, dtype=float).reshape(-1))
        if self.focal_depths.size != self.n_planes:
            raise ConfigurationError("one focal depth per plane required")

    def offsets(self, z):
        th = self.theta_speed * np.asarray(z, dtype=float)
        return 0.5 * self.omega * np.cos(th), -0.5 * self.omega * np.sin(th)

    def lobes(self, z):
        dz = z[:, None] - self.focal_depths[None, :]
        th = self.theta_speed * dz
        r1 = 0.5 * self.omega * np.cos(th)
        r2 = -0.5 * self.omega * np.sin(th)
        dr1 = -0.5 * self.omega * self.theta_speed * np.sin(th)
        dr2 = -0.5 * self.omega * self.theta_speed * np.cos(th)
        sig = np.full_like(dz, self.sigma)
        zero = np.zeros_like(dz)
        one = np.ones_like(dz)
        return [
            _Lobes(shift1=u * r1, shift2=u * r2, sig1=sig, sig2=sig, w=one,
                   dshift1=u * dr1, dshift2=u * dr2, dsig1=zero, dsig2=zero, dw=zero)
            for u in (-1.0, 1.0)
        ]


class MaTirf(PixelatedGaussian3D):
    """Isotropic lateral Gaussian modulated by angle-dependent evanescent decay.

    ``sqrt_depth`` switches the decay rate to the square-root form of the
    penetration depth; the default uses ``s = 4 pi n_i / lambda (sin^2 a - sin^2 a_c)``.
    """

    name = "ma-tirf"

    def __init__(self, optics: Optics = Optics(), n_planes: int = 1, *, sigma: float | None = None,
                 sqrt_depth: bool = False):
        super().__init__(optics, n_planes)
        self.sigma = optics.psf_sigma if sigma is None else float(sigma)
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        self.sqrt_depth = bool(sqrt_depth)
        self.angles, self.decay = tirf_angles_and_depths(optics, n_planes, sqrt_depth)

    def xi(self, z):
        return np.sum(np.exp(-2.0 * np.multiply.outer(z, self.decay)), axis=-1) ** -0.5

    def lobes(self, z):
        s = self.decay[None, :]
        e2 = np.exp(-2.0 * z[:, None] * s)
        s0 = e2.sum(axis=1, keepdims=True)
        s1 = (s * e2).sum(axis=1, keepdims=True)
        w = s0**-0.5 * np.exp(-z[:, None] * s)
        dw = w * (s1 / s0 - s)
        sig = np.full_like(w, self.sigma)
        zero = np.zeros_like(w)
        return [_Lobes(shift1=zero, shift2=zero, sig1=sig, sig2=sig, w=w,
                       dshift1=zero, dshift2=zero, dsig1=zero, dsig2=zero, dw=dw)]


def tirf_angles_and_depths(optics: Optics, n_angles: int, sqrt_depth: bool = False):
    """Incident angles (radians) and evanescent decay rates (1/micron).

    Angles are equispaced from the critical angle to ``arcsin(NA / n_i)``;
    a single angle sits at the critical angle.
    """
    if optics.n_t >= optics.n_i:
        raise ConfigurationError("n_t must be smaller than n_i")
    a_c = math.asin(optics.n_t / optics.n_i)
    a_max = math.asin(optics.na / optics.n_i)
    if n_angles == 1:
        angles = np.array([a_c])
    else:
        angles = a_c + (a_max - a_c) / (n_angles - 1) * np.arange(n_angles)
    gap = np.maximum(np.sin(angles) ** 2 - math.sin(a_c) ** 2, 0.0)
    if sqrt_depth:
        gap = np.sqrt(gap)
    return angles, 4 * math.pi * optics.n_i / optics.wavelength * gap


def astig_sigmas(kernel: Astigmatism, z):
    return kernel.sigmas(z)


def helix_offsets(kernel: DoubleHelix, z):
    return kernel.offsets(z)
