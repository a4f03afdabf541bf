"""Common machinery for measurement kernels ``phi: X -> R^M``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..measures import DiscreteMeasure


class DomainError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class AtomMatrix:
    """Columns ``phi(x_i)`` and, optionally, the derivative blocks of ``Gamma_x``.

    ``phi`` is (M, N); ``grad`` is (M, N, d) or None. ``gamma`` stacks the
    amplitude block first, then one (M, N) block per spatial dimension.
    """

    phi: np.ndarray
    grad: np.ndarray | None = None
    rank_deficient: bool = False

    @property
    def gamma(self) -> np.ndarray:
        if self.grad is None:
            return self.phi
        blocks = [self.phi] + [self.grad[:, :, j] for j in range(self.grad.shape[2])]
        return np.hstack(blocks)


class Kernel:
    """Base class for kernels defined on an axis-aligned box.

    Subclasses implement ``phis`` (M, N) and ``grad_phis`` (M, N, d) for a
    batch of points given as an (N, d) array.
    """

    dim: int = 1
    lower: np.ndarray
    upper: np.ndarray

    @property
    def size(self) -> int:
        raise NotImplementedError

    # -- batch evaluation, overridden by subclasses ----------------------
    def phis(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_phis(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- helpers ---------------------------------------------------------
    def as_points(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(-1, self.dim) if self.dim > 1 else pts.reshape(-1, 1)
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {pts.shape}")
        return pts

    def check_domain(self, x: np.ndarray, tol: float = 1e-12) -> None:
        span = self.upper - self.lower
        lo = self.lower - tol * span
        hi = self.upper + tol * span
        if np.any(x < lo) or np.any(x > hi) or not np.all(np.isfinite(x)):
            bad = x[np.any((x < lo) | (x > hi) | ~np.isfinite(x), axis=1)][0]
            raise DomainError(f"point {bad} outside domain [{self.lower}, {self.upper}]")

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    # -- single-point API ------------------------------------------------
    def phi(self, x) -> np.ndarray:
        pts = self.as_points(x)
        self.check_domain(pts)
        return self.phis(pts)[:, 0]

    def grad_phi(self, x) -> np.ndarray:
        pts = self.as_points(x)
        self.check_domain(pts)
        return self.grad_phis(pts)[:, 0, :]

    def correlation(self, x, xp) -> float:
        return float(self.phi(x) @ self.phi(xp))

    def forward(self, m: DiscreteMeasure) -> np.ndarray:
        if m.n_spikes == 0:
            return np.zeros(self.size)
        pts = self.as_points(m.positions)
        self.check_domain(pts)
        return self.phis(pts) @ m.amplitudes

    def adjoint(self, p: np.ndarray, x) -> np.ndarray:
        """``(Phi^* p)(x) = <phi(x), p>`` for one or many points."""
        pts = self.as_points(x)
        self.check_domain(pts)
        return self.phis(pts).T @ p

    def adjoint_grad(self, p: np.ndarray, x) -> np.ndarray:
        pts = self.as_points(x)
        self.check_domain(pts)
        return np.einsum("mnd,m->nd", self.grad_phis(pts), p)

    def adjoint_grid(self, p: np.ndarray, axes: list[np.ndarray]) -> np.ndarray:
        """Evaluate ``Phi^* p`` on the tensor grid spanned by ``axes``.

        Returns an array of shape ``tuple(len(a) for a in axes)``. The default
        builds the full atom matrix in chunks; separable kernels override it.
        """
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        out = np.empty(pts.shape[0])
        chunk = max(1, 2_000_000 // max(self.size, 1))
        for start in range(0, pts.shape[0], chunk):
            sl = slice(start, start + chunk)
            out[sl] = self.phis(pts[sl]).T @ p
        return out.reshape(mesh[0].shape)

    def atom_matrices(self, positions, with_derivatives: bool = False) -> AtomMatrix:
        pts = self.as_points(positions)
        self.check_domain(pts)
        phi = self.phis(pts)
        grad = self.grad_phis(pts) if with_derivatives else None
        dup = False
        if pts.shape[0] > 1:
            diff = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=-1)
            dup = bool(np.any(diff[np.triu_indices(pts.shape[0], 1)] == 0.0))
        return AtomMatrix(phi=phi, grad=grad, rank_deficient=dup)

    def default_grid(self) -> list[np.ndarray]:
        raise NotImplementedError


class Kernel1D(Kernel):
    """1-D kernel with derivatives of arbitrary order (needed by eta_W)."""

    dim = 1

    def derivatives(self, x: float, order: int) -> np.ndarray:
        """(M, order+1) matrix with columns ``phi^{(k)}(x)``, k = 0..order."""
        raise NotImplementedError

    def grad_phis(self, x: np.ndarray) -> np.ndarray:
        return np.stack(
            [self.derivatives(float(v), 1)[:, 1] for v in x[:, 0]], axis=1
        )[:, :, None]
