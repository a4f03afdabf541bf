"""Sampled 1-D Gaussian convolution kernel on [0, 1]."""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import hermite_e

from .base import Kernel1D


class Gaussian1D(Kernel1D):
    """``phi(x)_i = exp(-(t_i - x)^2 / (2 sigma^2)) / sqrt(2 pi sigma^2)``.

    The ``n_samples`` detector points ``t_i`` are equispaced on [0, 1],
    endpoints included.
    """

    def __init__(self, sigma: float = 0.05, n_samples: int = 100):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if n_samples < 2:
            raise ValueError("need at least two detector samples")
        self.sigma = float(sigma)
        self.n_samples = int(n_samples)
        self.samples = np.linspace(0.0, 1.0, self.n_samples)
        self.lower = np.zeros(1)
        self.upper = np.ones(1)
        self._c = 1.0 / math.sqrt(2 * math.pi * self.sigma**2)

    @property
    def size(self) -> int:
        return self.n_samples

    def phis(self, x):
        u = (x[:, 0][None, :] - self.samples[:, None]) / self.sigma
        return self._c * np.exp(-0.5 * u**2)

    def grad_phis(self, x):
        u = (x[:, 0][None, :] - self.samples[:, None]) / self.sigma
        return (-self._c / self.sigma * u * np.exp(-0.5 * u**2))[:, :, None]

    def derivatives(self, x, order):
        # d^k/dx^k e^{-u^2/2} = (-1)^k sigma^{-k} He_k(u) e^{-u^2/2}
        u = (x - self.samples) / self.sigma
        g = self._c * np.exp(-0.5 * u**2)
        out = np.empty((self.n_samples, order + 1))
        for k in range(order + 1):
            coef = np.zeros(k + 1)
            coef[k] = 1.0
            out[:, k] = (-1) ** k * self.sigma ** (-k) * hermite_e.hermeval(u, coef) * g
        return out

    def default_grid(self):
        n = 64 * math.ceil(1.0 / self.sigma)
        return [np.linspace(0.0, 1.0, n)]

    def __repr__(self):
        return f"Gaussian1D(sigma={self.sigma}, n_samples={self.n_samples})"
