"""Laplace-type kernels ``phi(x) = xi(x) (e^{-s_k x})_k``.

Two families live here:

* :class:`SampledLaplace` -- finitely many samples ``s_k`` (a genuine
  measurement operator with observations in R^K), unnormalized
  (``xi = 1``) or L2-normalized so that ``||phi(x)|| = 1``.
* :class:`ContinuousLaplace` -- Lebesgue sampling on ``R_+``. There is no
  finite observation vector, only the correlation ``C(x, x')`` and its
  partial derivatives, which is all the eta_W construction needs.
"""

from __future__ import annotations

import math

import numpy as np

from .base import ConfigurationError, DomainError, Kernel1D


def _power_series_pow(g: np.ndarray, alpha: float) -> np.ndarray:
    """Taylor coefficients of ``g(t)^alpha`` from those of ``g`` (Miller's recurrence)."""
    n = g.size
    f = np.zeros(n)
    f[0] = g[0] ** alpha
    for k in range(1, n):
        j = np.arange(1, k + 1)
        f[k] = np.sum(((alpha + 1) * j - k) * g[j] * f[k - j]) / (k * g[0])
    return f


class SampledLaplace(Kernel1D):
    """Discretized Laplace transform with sample points ``s`` (nonnegative, increasing)."""

    def __init__(self, s, normalized: bool = False, lower: float = 0.0, upper: float = 10.0):
        s = np.asarray(s, dtype=float).reshape(-1)
        if s.size == 0:
            raise ConfigurationError("need at least one sample point")
        if np.any(s < 0) or np.any(np.diff(s) <= 0):
            raise ConfigurationError("sample points must be >= 0 and strictly increasing")
        if not lower < upper:
            raise ConfigurationError("empty domain")
        if normalized and lower < 0:
            raise ConfigurationError("normalized Laplace needs a nonnegative domain")
        self.s = s
        self.normalized = bool(normalized)
        self.lower = np.array([float(lower)])
        self.upper = np.array([float(upper)])

    @classmethod
    def uniform(cls, n: int, s_max: float, **kwargs) -> "SampledLaplace":
        return cls(np.linspace(0.0, s_max, n), **kwargs)

    @property
    def size(self) -> int:
        return self.s.size

    def _xi(self, x):
        return np.sum(np.exp(-2.0 * np.outer(self.s, x)), axis=0) ** -0.5

    def phis(self, x):
        e = np.exp(-np.outer(self.s, x[:, 0]))
        if self.normalized:
            e = e * self._xi(x[:, 0])[None, :]
        return e

    def grad_phis(self, x):
        xs = x[:, 0]
        e = np.exp(-np.outer(self.s, xs))
        de = -self.s[:, None] * e
        if not self.normalized:
            return de[:, :, None]
        w = np.exp(-2.0 * np.outer(self.s, xs))
        s0 = w.sum(axis=0)
        s1 = (self.s[:, None] * w).sum(axis=0)
        xi = s0**-0.5
        dxi = xi * s1 / s0
        return (dxi[None, :] * e + xi[None, :] * de)[:, :, None]

    def derivatives(self, x, order):
        e = np.exp(-self.s * x)
        pw = np.stack([(-self.s) ** k for k in range(order + 1)], axis=1)
        raw = pw * e[:, None]
        if not self.normalized:
            return raw
        # Taylor coefficients of S0(x + t) = sum_k e^{-2 s_k (x + t)}
        w = np.exp(-2.0 * self.s * x)
        g = np.array([np.sum((-2.0 * self.s) ** j * w) / math.factorial(j)
                      for j in range(order + 1)])
        xi_taylor = _power_series_pow(g, -0.5)
        xi_der = xi_taylor * np.array([math.factorial(j) for j in range(order + 1)])
        out = np.zeros_like(raw)
        for n in range(order + 1):
            for j in range(n + 1):
                out[:, n] += math.comb(n, j) * xi_der[j] * raw[:, n - j]
        return out

    def correlation(self, x, xp):
        x = float(np.asarray(x).reshape(-1)[0])
        xp = float(np.asarray(xp).reshape(-1)[0])
        self.check_domain(np.array([[x], [xp]]))
        c = float(np.sum(np.exp(-self.s * (x + xp))))
        if self.normalized:
            c *= float(self._xi(np.array([x]))[0] * self._xi(np.array([xp]))[0])
        return c

    def default_grid(self):
        return [np.linspace(self.lower[0], self.upper[0], 2048)]

    def __repr__(self):
        kind = "normalized" if self.normalized else "unnormalized"
        return f"SampledLaplace(K={self.size}, {kind}, domain=[{self.lower[0]}, {self.upper[0]}])"


class ContinuousLaplace:
    """Laplace transform against Lebesgue measure on ``R_+`` (correlation only).

    Unnormalized: ``C(x, x') = 1 / (x + x')``.
    Normalized (``xi(x) = sqrt(2x)``): ``C(x, x') = 2 sqrt(x x') / (x + x')``.
    """

    dim = 1

    def __init__(self, normalized: bool = False, lower: float = 1e-3, upper: float = 100.0):
        if lower <= 0 or not lower < upper:
            raise ConfigurationError("continuous Laplace needs 0 < lower < upper")
        self.normalized = bool(normalized)
        self.lower = np.array([float(lower)])
        self.upper = np.array([float(upper)])

    @staticmethod
    def _check(x, xp):
        if np.any(np.asarray(x) + np.asarray(xp) <= 0):
            raise DomainError("Laplace correlation is singular for x + x' <= 0")

    @staticmethod
    def _xi_derivative(x, n: int):
        # d^n/dx^n sqrt(2x) = sqrt(2) (1/2)(1/2 - 1)...(1/2 - n + 1) x^{1/2 - n}
        coef = math.sqrt(2.0)
        for j in range(n):
            coef *= 0.5 - j
        return coef * np.asarray(x, dtype=float) ** (0.5 - n)

    def correlation(self, x, xp):
        return self.correlation_derivative(x, xp, 0, 0)

    def correlation_derivative(self, x, xp, i: int, j: int):
        """``d^i/dx^i d^j/dx'^j C(x, x')``, vectorized over ``x``.

        Uses the moment identity ``int s^n e^{-(x+x')s} ds = n! / (x+x')^{n+1}``.
        """
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        self._check(x, xp)
        tot = x + xp

        def moment(n):
            return (-1) ** n * math.factorial(n) / tot ** (n + 1)

        if not self.normalized:
            return moment(i + j)
        out = np.zeros(np.broadcast(x, xp).shape)
        for a in range(i + 1):
            for b in range(j + 1):
                out = out + (
                    math.comb(i, a) * math.comb(j, b)
                    * self._xi_derivative(x, i - a) * self._xi_derivative(xp, j - b)
                    * moment(a + b)
                )
        return out

    def __repr__(self):
        kind = "normalized" if self.normalized else "unnormalized"
        return f"ContinuousLaplace({kind})"
