"""Sliding Frank-Wolfe for the BLASSO, plus the plain Frank-Wolfe baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .certificates import eta_lambda
from .kernels import Kernel
from .measures import DiscreteMeasure, prune, tv_norm
from .solvers import (
    DescentConfig,
    LassoConfig,
    argmax_certificate,
    lasso_fixed_support,
    local_descent,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlassoProblem:
    """``min_m 1/2 ||Phi m - y||^2 + lam |m|(X)``, optionally with ``m >= 0``."""

    kernel: Kernel
    y: np.ndarray
    lam: float
    positive: bool = False
    lasso: LassoConfig = LassoConfig()
    descent: DescentConfig = DescentConfig()
    grid: list | None = None
    stop_tol: float = 1e-9
    prune_rel: float = 1e-10

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("regularization parameter must be positive")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.size != self.kernel.size:
            raise ValueError(
                f"observation has {y.size} entries, kernel expects {self.kernel.size}"
            )
        object.__setattr__(self, "y", y)

    @property
    def mass_bound(self) -> float:
        """``||y||^2 / (2 lam)``: every minimizer has TV norm below this."""
        return float(self.y @ self.y) / (2 * self.lam)


class Termination(str, Enum):
    CERTIFICATE_BOUNDED = "CertificateBounded"
    ITERATION_CAP = "IterationCap"


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    n_spikes: int
    inserted: list[float] | None
    certificate_max: float
    objective_after_lasso: float | None = None
    descent_history: list[float] = field(default_factory=list)
    step: bool = True


@dataclass
class SfwTrace:
    records: list[IterationRecord] = field(default_factory=list)
    termination: Termination | None = None
    initial_objective: float = float("nan")

    @property
    def n_iterations(self) -> int:
        """Number of completed outer iterations."""
        return sum(r.step for r in self.records)

    @property
    def objectives(self) -> list[float]:
        """Objective at ``m = 0`` followed by its value after each step."""
        return [self.initial_objective] + [r.objective for r in self.records if r.step]

    def to_dict(self) -> dict:
        return {
            "termination": self.termination.value if self.termination else None,
            "n_iterations": self.n_iterations,
            "initial_objective": self.initial_objective,
            "records": [
                {
                    "iteration": r.iteration,
                    "objective": r.objective,
                    "n_spikes": r.n_spikes,
                    "inserted": r.inserted,
                    "certificate_max": r.certificate_max,
                    "objective_after_lasso": r.objective_after_lasso,
                    "descent_history": r.descent_history,
                    "step": r.step,
                }
                for r in self.records
            ],
        }


def objective(problem: BlassoProblem, m: DiscreteMeasure) -> float:
    r = problem.kernel.forward(m) - problem.y
    return 0.5 * float(r @ r) + problem.lam * tv_norm(m)


def _prune(m: DiscreteMeasure, rel: float) -> DiscreteMeasure:
    if m.n_spikes == 0:
        return m
    return prune(m, rel * float(np.abs(m.amplitudes).max()))


def run_sfw(problem: BlassoProblem, max_outer: int = 100) -> tuple[DiscreteMeasure, SfwTrace]:
    """Sliding Frank-Wolfe starting from the zero measure.

    Each outer iteration adds the certificate argmax as a new spike (its sign
    fixed to that of the certificate there), refits amplitudes by LASSO,
    prunes, then moves amplitudes and positions jointly.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be >= 1")
    kernel = problem.kernel
    m = DiscreteMeasure.empty(kernel.dim)
    f = objective(problem, m)
    trace = SfwTrace(initial_objective=f)
    for k in range(max_outer + 1):
        cert = eta_lambda(kernel, problem.y, problem.lam, m)
        x_star, val = argmax_certificate(cert, problem.grid, positive_only=problem.positive)
        if val <= 1.0 + problem.stop_tol:
            trace.records.append(IterationRecord(k, f, m.n_spikes, None, val, step=False))
            trace.termination = Termination.CERTIFICATE_BOUNDED
            return m, trace
        if k == max_outer:
            trace.records.append(IterationRecord(k, f, m.n_spikes, None, val, step=False))
            break
        sign = 1.0 if problem.positive else float(np.sign(_eval(cert, x_star[None, :])[0]))
        positions = np.vstack([m.positions.reshape(-1, kernel.dim), x_star[None, :]])
        signs = np.concatenate([np.sign(m.amplitudes), [sign]])
        warm = np.concatenate([m.amplitudes, [0.0]])
        res = lasso_fixed_support(kernel, positions, problem.y, problem.lam,
                                  problem.lasso, signs=signs, x0=warm)
        m_half = _prune(DiscreteMeasure(res.amplitudes, positions), problem.prune_rel)
        f_half = objective(problem, m_half)
        desc = local_descent(kernel, m_half.amplitudes, m_half.positions, problem.y,
                             problem.lam, problem.descent)
        m = _prune(DiscreteMeasure(desc.amplitudes, desc.positions), problem.prune_rel)
        f_new = objective(problem, m)
        trace.records.append(IterationRecord(
            k, f_new, m.n_spikes, x_star.tolist(), val, f_half, desc.history))
        log.debug("sfw iter %d: %d spikes, objective %.6e", k, m.n_spikes, f_new)
        f = f_new
    trace.termination = Termination.ITERATION_CAP
    log.warning("SFW stopped at the iteration cap (%d)", max_outer)
    return m, trace


def _merge(positions: np.ndarray, amplitudes: np.ndarray):
    uniq, inv = np.unique(positions, axis=0, return_inverse=True)
    amps = np.zeros(uniq.shape[0])
    np.add.at(amps, inv.reshape(-1), amplitudes)
    return uniq, amps


def run_fw_reference(problem: BlassoProblem, max_outer: int = 100,
                     gap_tol: float = 1e-12) -> tuple[DiscreteMeasure, SfwTrace]:
    """Classical Frank-Wolfe on the epigraphical lift, step ``2/(k+2)``.

    Candidate extreme points are ``(0, 0)`` and ``(M, +-M delta_x*)`` with
    ``M = ||y||^2 / (2 lam)``. No sliding; repeated positions are merged.
    """
    if max_outer < 1:
        raise ValueError("max_outer must be >= 1")
    kernel = problem.kernel
    lam = problem.lam
    M = problem.mass_bound
    m = DiscreteMeasure.empty(kernel.dim)
    t = 0.0
    f = objective(problem, m)
    trace = SfwTrace(initial_objective=f)
    for k in range(max_outer + 1):
        cert = eta_lambda(kernel, problem.y, lam, m)
        x_star, val = argmax_certificate(cert, problem.grid, positive_only=problem.positive)
        # linear form of the lifted problem: lam * (t - <eta, m>)
        current = lam * t
        if m.n_spikes:
            current -= lam * float(m.amplitudes @ np.atleast_1d(_eval(cert, m.positions)))
        if val > 1.0:
            sign = 1.0 if problem.positive else float(np.sign(_eval(cert, x_star[None, :])[0]))
            s_t, s_amp, s_pos = M, sign * M, x_star
            lowest = lam * M * (1.0 - val)
        else:
            s_t, s_amp, s_pos = 0.0, 0.0, None
            lowest = 0.0
        if current - lowest <= gap_tol * max(1.0, abs(f)):
            trace.records.append(IterationRecord(k, f, m.n_spikes, None, val, step=False))
            trace.termination = Termination.CERTIFICATE_BOUNDED
            return m, trace
        if k == max_outer:
            trace.records.append(IterationRecord(k, f, m.n_spikes, None, val, step=False))
            break
        gamma = 2.0 / (k + 2)
        amps = (1 - gamma) * m.amplitudes
        pos = m.positions.reshape(-1, kernel.dim)
        if s_pos is not None:
            amps = np.concatenate([amps, [gamma * s_amp]])
            pos = np.vstack([pos, s_pos[None, :]])
        if amps.size:
            pos, amps = _merge(pos, amps)
        m = prune(DiscreteMeasure(amps, pos), 0.0)
        t = (1 - gamma) * t + gamma * s_t
        f = objective(problem, m)
        trace.records.append(IterationRecord(
            k, f, m.n_spikes, None if s_pos is None else s_pos.tolist(), val))
    trace.termination = Termination.ITERATION_CAP
    return m, trace


def _eval(cert, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return np.atleast_1d(cert(pts[:, 0] if pts.shape[1] == 1 else pts))


@dataclass
class OptimalityReport:
    certificate_max: float
    value_residuals: list[float]
    gradient_norms: list[float]
    tol: float
    optimal: bool

    def to_dict(self) -> dict:
        return {
            "certificate_max": self.certificate_max,
            "value_residuals": self.value_residuals,
            "gradient_norms": self.gradient_norms,
            "tol": self.tol,
            "optimal": self.optimal,
        }


def verify_optimality(problem: BlassoProblem, m: DiscreteMeasure,
                      grid: int | list | None = None, tol: float = 1e-6,
                      grad_tol: float | None = None) -> OptimalityReport:
    """Check the first-order conditions of ``m`` through ``eta_lambda``.

    ``m`` is optimal iff ``sup |eta| <= 1 + tol`` (``sup eta`` in positive
    mode, with the max refined from the grid) and ``|eta(x_i) - sign(a_i)| <= tol``.
    Gradient norms at the spikes are always reported, and enforced only
    when ``grad_tol`` is given.
    """
    kernel = problem.kernel
    cert = eta_lambda(kernel, problem.y, problem.lam, m)
    _, top = argmax_certificate(cert, problem.grid if grid is None else grid,
                                positive_only=problem.positive)
    residuals, grads = [], []
    for a, x in m:
        residuals.append(abs(float(_eval(cert, x[None, :])[0]) - float(np.sign(a))))
        grads.append(float(np.linalg.norm(cert.gradient(x[None, :] if kernel.dim > 1 else x))))
    ok = top <= 1.0 + tol and all(r <= tol for r in residuals)
    if grad_tol is not None:
        interior = [
            bool(np.all((x > kernel.lower) & (x < kernel.upper))) for x in m.positions
        ]
        ok = ok and all(g <= grad_tol for g, inside in zip(grads, interior) if inside)
    if problem.positive:
        ok = ok and bool(np.all(m.amplitudes > 0))
    return OptimalityReport(float(top), residuals, grads, tol, bool(ok))
