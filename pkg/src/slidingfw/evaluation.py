"""Localization scores: radius matching, Jaccard / recall / precision, RMSE."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

R_DETECT = 0.02
R_RMSE = 0.1


@dataclass(frozen=True)
class MatchResult:
    pairs: list[tuple[int, int, float]]
    false_positives: list[int]
    false_negatives: list[int]
    radius: float
    errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.false_positives)

    @property
    def fn(self) -> int:
        return len(self.false_negatives)


def _as_points(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        return p.reshape(0, p.shape[-1] if p.ndim == 2 else 1)
    return p.reshape(p.shape[0], -1) if p.ndim > 1 else p.reshape(-1, 1)


def match_points(est, gt, r: float) -> MatchResult:
    """Pair estimates with ground truth within distance ``r``.

    Among all matchings using only pairs at distance ``<= r`` this returns one
    of maximum size, and among those one of minimum total distance. Solved
    as a single rectangular assignment where infeasible pairs cost more than
    any feasible matching can.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    est, gt = _as_points(est), _as_points(gt)
    n, m = est.shape[0], gt.shape[0]
    dim = est.shape[1] if n else (gt.shape[1] if m else 1)
    if n == 0 or m == 0:
        return MatchResult([], list(range(n)), list(range(m)), r, np.zeros((0, dim)))
    dist = cdist(est, gt)
    big = r * (n + m + 1) + 1.0
    cost = np.where(dist <= r, dist, big)
    rows, cols = linear_sum_assignment(cost)
    keep = dist[rows, cols] <= r
    rows, cols = rows[keep], cols[keep]
    order = np.argsort(rows, kind="stable")
    rows, cols = rows[order], cols[order]
    pairs = [(int(i), int(j), float(dist[i, j])) for i, j in zip(rows, cols)]
    fp = sorted(set(range(n)) - set(rows.tolist()))
    fn = sorted(set(range(m)) - set(cols.tolist()))
    return MatchResult(pairs, fp, fn, r, est[rows] - gt[cols])


def _ratio(num: int, den: int, both_empty: bool) -> float:
    if den == 0:
        return 1.0 if both_empty else 0.0
    return num / den


@dataclass(frozen=True)
class FrameScore:
    jaccard: float
    recall: float
    precision: float
    rmse: tuple[float, ...]
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        out = {"jaccard": self.jaccard, "recall": self.recall, "precision": self.precision,
               "tp": self.tp, "fp": self.fp, "fn": self.fn}
        for i, v in enumerate(self.rmse, 1):
            out[f"rmse_x{i}"] = v
        return out


def rmse(errors: np.ndarray, dim: int) -> tuple[float, ...]:
    """Per-axis RMSE of paired errors; NaN when nothing is paired."""
    if errors.shape[0] == 0:
        return tuple([float("nan")] * dim)
    return tuple(float(v) for v in np.sqrt(np.mean(errors**2, axis=0)))


def score_frame(match: MatchResult, est_count: int, gt_count: int,
                rmse_match: MatchResult | None = None) -> FrameScore:
    """Detection metrics from ``match``; RMSE from ``rmse_match`` (default ``match``).

    Empty denominators give 1 when both sets are empty and 0 otherwise.
    """
    tp, fp, fn = match.tp, match.fp, match.fn
    if tp + fp != est_count or tp + fn != gt_count:
        raise ValueError("counts are inconsistent with the match")
    empty = est_count == 0 and gt_count == 0
    src = match if rmse_match is None else rmse_match
    dim = src.errors.shape[1] if src.errors.ndim == 2 and src.errors.shape[1] else 3
    return FrameScore(
        jaccard=_ratio(tp, tp + fp + fn, empty),
        recall=_ratio(tp, tp + fn, empty),
        precision=_ratio(tp, tp + fp, empty),
        rmse=rmse(src.errors, dim),
        tp=tp, fp=fp, fn=fn,
    )


def evaluate_frame(est, gt, r_detect: float = R_DETECT, r_rmse: float = R_RMSE):
    est, gt = _as_points(est), _as_points(gt)
    m_det = match_points(est, gt, r_detect)
    m_rmse = match_points(est, gt, r_rmse)
    return score_frame(m_det, est.shape[0], gt.shape[0], m_rmse), m_det, m_rmse


def aggregate(scores: Sequence[FrameScore], rmse_matches: Sequence[MatchResult]) -> dict:
    """``pooled`` (sums over frames) and ``per_frame_mean`` summaries."""
    if not scores:
        raise ValueError("no frames to aggregate")
    tp = sum(s.tp for s in scores)
    fp = sum(s.fp for s in scores)
    fn = sum(s.fn for s in scores)
    empty = tp + fp + fn == 0
    errs = [m.errors for m in rmse_matches if m.errors.shape[0]]
    dim = len(scores[0].rmse)
    pooled_rmse = rmse(np.vstack(errs), dim) if errs else tuple([float("nan")] * dim)
    pooled = {
        "jaccard": _ratio(tp, tp + fp + fn, empty),
        "recall": _ratio(tp, tp + fn, empty),
        "precision": _ratio(tp, tp + fp, empty),
        "tp": tp, "fp": fp, "fn": fn,
    }
    mean = {
        "jaccard": float(np.mean([s.jaccard for s in scores])),
        "recall": float(np.mean([s.recall for s in scores])),
        "precision": float(np.mean([s.precision for s in scores])),
    }
    per_axis = np.array([s.rmse for s in scores], dtype=float)
    for i in range(dim):
        pooled[f"rmse_x{i + 1}"] = pooled_rmse[i]
        col = per_axis[:, i]
        mean[f"rmse_x{i + 1}"] = float(np.mean(col[~np.isnan(col)])) if np.any(~np.isnan(col)) else float("nan")
    return {"pooled": pooled, "per_frame_mean": mean, "n_frames": len(scores)}


def default_lambda_grid(lam0: float, n: int = 8, decades: float = 3.0) -> np.ndarray:
    """``n`` log-spaced values over ``decades`` decades centred on ``lam0``."""
    if lam0 <= 0:
        raise ValueError("lam0 must be positive")
    return lam0 * np.logspace(-decades / 2, decades / 2, n)


def select_lambda(lambdas: Sequence[float], frames: Sequence[tuple[np.ndarray, np.ndarray]],
                  reconstruct: Callable[[np.ndarray, float], np.ndarray],
                  r: float = R_DETECT):
    """Pick the grid value with the best mean Jaccard on training frames.

    Parameters
    ----------
    lambdas
        Candidate values. Ties go to the smaller one.
    frames
        ``(y, gt_positions)`` pairs.
    reconstruct
        ``reconstruct(y, lam)`` returning estimated positions.

    Returns
    -------
    best : float
    table : list of (lam, mean_jaccard)
    """
    if len(lambdas) == 0 or len(frames) == 0:
        raise ValueError("need at least one lambda and one frame")
    table = []
    for lam in lambdas:
        jac = []
        for y, gt in frames:
            est = _as_points(reconstruct(y, float(lam)))
            gt = _as_points(gt)
            m = match_points(est, gt, r)
            jac.append(score_frame(m, est.shape[0], gt.shape[0]).jaccard)
        table.append((float(lam), float(np.mean(jac))))
    best_score = max(s for _, s in table)
    best = min(lam for lam, s in table if s == best_score)
    return best, table
