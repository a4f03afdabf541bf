"""Inner solvers for the sliding Frank-Wolfe loop.

* FISTA for the (sign-constrained) LASSO on a fixed support,
* bounded L-BFGS on amplitudes and positions jointly,
* grid search + Newton ascent for the certificate argmax.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, nnls

from .kernels import Kernel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LassoConfig:
    max_iter: int = 20000
    tol: float = 1e-10
    nonnegative: bool = True

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("LASSO tolerance must be > 0 and max_iter >= 1")


@dataclass(frozen=True)
class DescentConfig:
    max_iter: int = 500
    grad_tol: float = 1e-9
    memory: int = 10

    def __post_init__(self):
        if self.grad_tol <= 0 or self.max_iter < 1 or self.memory < 1:
            raise ValueError("invalid descent configuration")


@dataclass
class LassoResult:
    amplitudes: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass
class DescentResult:
    amplitudes: np.ndarray
    positions: np.ndarray
    objective_before: float
    objective: float
    iterations: int
    converged: bool
    message: str = ""
    history: list[float] = field(default_factory=list)


def lasso_objective(A, a, y, lam):
    r = A @ a - y
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def power_iteration(A: np.ndarray, max_iter: int = 50, rtol: float = 1e-8) -> float:
    """Largest eigenvalue of ``A^T A``."""
    n = A.shape[1]
    if n == 0:
        return 0.0
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        new = float(v @ w)
        v = w / nrm
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    return lam


def lipschitz_estimate(kernel: Kernel, positions) -> float:
    """Step-size constant: ``1.01 * ||Phi_x||^2`` via power iteration."""
    A = kernel.atom_matrices(positions).phi
    return 1.01 * power_iteration(A)


def fista(A: np.ndarray, y: np.ndarray, lam: float, *, nonnegative: bool = False,
          x0=None, max_iter: int = 20000, tol: float = 1e-10,
          lipschitz: float | None = None) -> LassoResult:
    """FISTA with function-value restart for ``1/2 ||A a - y||^2 + lam ||a||_1``.

    Stops when both the relative objective change and the relative iterate
    change fall below ``tol``.
    """
    n = A.shape[1]
    if n == 0:
        return LassoResult(np.zeros(0), 0.5 * float(y @ y), 0, True)
    L = lipschitz if lipschitz is not None else 1.01 * power_iteration(A)
    if L <= 0:
        return LassoResult(np.zeros(n), 0.5 * float(y @ y), 0, True)
    AtA = A.T @ A
    Aty = A.T @ y
    yy = float(y @ y)

    def obj(a):
        return 0.5 * float(a @ AtA @ a) - float(Aty @ a) + 0.5 * yy + lam * float(np.abs(a).sum())

    def prox(v):
        if nonnegative:
            return np.maximum(v - lam / L, 0.0)
        return np.sign(v) * np.maximum(np.abs(v) - lam / L, 0.0)

    a = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if nonnegative:
        a = np.maximum(a, 0.0)
    z = a.copy()
    t = 1.0
    f = obj(a)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        a_new = prox(z - (AtA @ z - Aty) / L)
        f_new = obj(a_new)
        if f_new > f:
            # restart: drop momentum, take a plain proximal step from a
            t = 1.0
            a_new = prox(a - (AtA @ a - Aty) / L)
            f_new = obj(a_new)
            z = a_new.copy()
        else:
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
            z = a_new + (t - 1) / t_new * (a_new - a)
            t = t_new
        small_f = abs(f - f_new) <= tol * (1 + abs(f_new))
        small_a = np.linalg.norm(a_new - a) <= tol * (1 + np.linalg.norm(a_new))
        a, f = a_new, f_new
        if small_f and small_a:
            converged = True
            break
    if not converged:
        log.debug("FISTA did not converge in %d iterations", max_iter)
    return LassoResult(a, f, it, converged)


def lasso_fixed_support(kernel: Kernel, positions, y, lam: float,
                        cfg: LassoConfig = LassoConfig(), signs=None, x0=None) -> LassoResult:
    """LASSO over amplitudes with positions held fixed.

    With ``signs`` given, amplitude ``i`` is constrained to have sign
    ``signs[i]`` (solved as a nonnegative problem on the flipped atoms).
    """
    if lam <= 0:
        raise ValueError("regularization parameter must be positive")
    A = kernel.atom_matrices(positions).phi
    y = np.asarray(y, dtype=float)
    if signs is not None:
        s = np.asarray(signs, dtype=float)
        start = None if x0 is None else s * np.asarray(x0, dtype=float)
        res = fista(A * s, y, lam, nonnegative=True, x0=start,
                    max_iter=cfg.max_iter, tol=cfg.tol)
        res.amplitudes = s * res.amplitudes
        return res
    return fista(A, y, lam, nonnegative=cfg.nonnegative, x0=x0,
                 max_iter=cfg.max_iter, tol=cfg.tol)


def blasso_objective(kernel: Kernel, a, x, y, lam) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.5 * float(np.dot(y, y))
    r = kernel.phis(np.asarray(x, dtype=float).reshape(a.size, -1)) @ a - y
    return 0.5 * float(r @ r) + lam * float(np.abs(a).sum())


def refit_amplitudes(kernel: Kernel, a, x, y, lam, signs) -> np.ndarray:
    """Exact sign-constrained LASSO amplitudes at fixed positions.

    With ``b = signs * a >= 0`` the objective is ``1/2 ||B b - y||^2 + lam 1^T b``
    for ``B = Phi_x diag(signs)``. The linear term is absorbed into the target
    through the min-norm ``z`` with ``B^T z = lam 1``, leaving an NNLS problem
    solved by an active-set method. The result is the exact minimizer, so it
    is kept unless it is worse than ``a`` beyond round-off.
    """
    B = kernel.phis(x) * signs
    z, *_ = np.linalg.lstsq(B.T, np.full(B.shape[1], float(lam)), rcond=None)
    try:
        b, _ = nnls(B, y - z, maxiter=50 * B.shape[1])
    except RuntimeError:
        return a
    sol = signs * b
    f_a = blasso_objective(kernel, a, x, y, lam)
    if blasso_objective(kernel, sol, x, y, lam) <= f_a + 1e-13 * (1.0 + abs(f_a)):
        return sol
    return a


def local_descent(kernel: Kernel, a0, x0, y, lam: float,
                  cfg: DescentConfig = DescentConfig()) -> DescentResult:
    """Joint bounded descent on ``1/2 ||Phi_x a - y||^2 + lam ||a||_1``.

    Amplitudes keep the sign they start with (which makes the objective
    smooth), positions stay in the kernel's box. Variables are rescaled
    internally so that amplitudes and positions are of comparable size.
    """
    a0 = np.asarray(a0, dtype=float).reshape(-1)
    n = a0.size
    d = kernel.dim
    x0 = np.asarray(x0, dtype=float).reshape(n, d)
    y = np.asarray(y, dtype=float)
    f_before = blasso_objective(kernel, a0, x0, y, lam)
    if n == 0:
        return DescentResult(a0, x0, f_before, f_before, 0, True)
    if np.any(a0 == 0):
        raise ValueError("zero amplitudes must be pruned before the descent")
    signs = np.sign(a0)
    a_scale = float(np.abs(a0).max())
    x_scale = np.maximum(kernel.upper - kernel.lower, 1e-12)
    f_scale = max(f_before, 1e-300)

    def unpack(v):
        a = v[:n] * a_scale
        x = kernel.lower + v[n:].reshape(n, d) * x_scale
        return a, x

    history = [f_before]
    last = {}

    def fun(v):
        a, x = unpack(v)
        phi = kernel.phis(x)
        r = phi @ a - y
        f = 0.5 * float(r @ r) + lam * float(signs @ a)
        ga = phi.T @ r + lam * signs
        gx = a[:, None] * kernel.adjoint_grad(r, x)
        g = np.concatenate([ga * a_scale, (gx * x_scale).ravel()])
        last["v"], last["f"] = v.copy(), f
        return f / f_scale, g / f_scale

    def record(v):
        if "v" in last and np.array_equal(v, last["v"]):
            history.append(last["f"])
        else:
            history.append(f_scale * fun(v)[0])

    v0 = np.concatenate([a0 / a_scale, ((x0 - kernel.lower) / x_scale).ravel()])
    bounds = [(0.0, None) if s > 0 else (None, 0.0) for s in signs]
    bounds += [(0.0, 1.0)] * (n * d)
    res = minimize(
        fun, v0, jac=True, method="L-BFGS-B", bounds=bounds,
        callback=record,
        options={"maxiter": cfg.max_iter, "maxcor": cfg.memory,
                 "ftol": 1e-15, "gtol": cfg.grad_tol, "maxls": 50},
    )
    a, x = unpack(res.x)
    x = np.clip(x, kernel.lower, kernel.upper)
    a = np.where(a * signs < 0, 0.0, a)
    f_after = blasso_objective(kernel, a, x, y, lam)
    if f_after > f_before:
        a, x, f_after = a0.copy(), x0.copy(), f_before
    a = refit_amplitudes(kernel, a, x, y, lam, signs)
    f_after = blasso_objective(kernel, a, x, y, lam)
    history.append(f_after)
    return DescentResult(a, x, f_before, f_after, int(res.nit), bool(res.success),
                         str(res.message), history)


def argmax_certificate(cert, grid: list[np.ndarray] | int | None = None,
                       positive_only: bool = False, max_newton: int = 50):
    """Maximize ``|eta|`` (or ``eta``) over the kernel's box.

    A tensor grid search (ties -> lowest linear index) is refined by Newton
    ascent with finite-difference curvature from the analytic gradient,
    falling back to projected gradient steps, with backtracking. Returns
    ``(x_star, value)`` where value is ``|eta(x_star)|`` (or ``eta``).
    """
    kernel = cert.kernel
    lo = np.asarray(kernel.lower, dtype=float)
    hi = np.asarray(kernel.upper, dtype=float)
    if grid is None:
        axes = kernel.default_grid()
    elif isinstance(grid, (int, np.integer)):
        if grid < 2:
            raise ValueError("grid needs at least 2 points per axis")
        axes = [np.linspace(lo[j], hi[j], int(grid)) for j in range(lo.size)]
    else:
        axes = [np.asarray(a, dtype=float) for a in grid]
    vals = np.asarray(cert.on_grid(axes)).reshape([a.size for a in axes])
    score = vals if positive_only else np.abs(vals)
    idx = np.unravel_index(int(np.argmax(score)), score.shape)
    x = np.array([axes[j][idx[j]] for j in range(lo.size)])
    best = float(score[idx])
    if best == 0.0:
        return x, 0.0
    sgn = 1.0 if positive_only else float(np.sign(vals[idx]))
    steps = np.array([(a[1] - a[0]) if a.size > 1 else (hi[j] - lo[j]) for j, a in enumerate(axes)])

    def value(pt):
        return sgn * float(np.atleast_1d(cert(pt[0] if pt.size == 1 else pt))[0])

    def grad(pt):
        return sgn * np.asarray(cert.gradient(pt[0] if pt.size == 1 else pt)).reshape(-1)

    f = value(x)
    h = 1e-6 * np.maximum(steps, 1e-12)
    for _ in range(max_newton):
        g = grad(x)
        free = ~(((x <= lo) & (g < 0)) | ((x >= hi) & (g > 0)))
        if not np.any(free) or np.all(np.abs(g[free]) == 0):
            break
        H = np.empty((x.size, x.size))
        for j in range(x.size):
            e = np.zeros(x.size)
            e[j] = h[j]
            H[:, j] = (grad(x + e) - grad(x - e)) / (2 * h[j])
        H = 0.5 * (H + H.T)
        direction = None
        Hf = H[np.ix_(free, free)]
        if np.all(np.linalg.eigvalsh(Hf) < 0):
            direction = np.zeros_like(x)
            direction[free] = -np.linalg.solve(Hf, g[free])
        else:
            direction = np.where(free, g, 0.0)
            direction *= np.min(steps) / max(np.linalg.norm(direction), 1e-300)
        t = 1.0
        improved = False
        for _ in range(40):
            cand = np.clip(x + t * direction, lo, hi)
            fc = value(cand)
            if fc > f:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        moved = np.abs(cand - x).max()
        gain = fc - f
        x, f = cand, fc
        if moved <= 1e-13 * max(1.0, np.abs(x).max()) or gain <= 1e-16 * abs(f):
            break
    return x, f
