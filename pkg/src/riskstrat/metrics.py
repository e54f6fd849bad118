"""Discrimination, calibration and post hoc recalibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from riskstrat import kernels
from riskstrat.errors import DimensionMismatch, NonFinite, SingleClass


def _scores_labels(scores, labels, need_both=True):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise DimensionMismatch(f"{s.shape[0]} scores but {y.shape[0]} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    y = y.astype(np.int64)
    if need_both and (y.sum() == 0 or y.sum() == y.shape[0]):
        raise SingleClass("both classes are required")
    return s, y


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties counting half.

    Computed from midrank sums in O(n log n).
    """
    s, y = _scores_labels(scores, labels)
    return float(kernels.rank_auc(s, y))


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]
    auc: float

    def to_list(self):
        return [
            [fpr, tpr, None if math.isinf(thr) else thr]
            for (fpr, tpr), thr in zip(self.points, self.thresholds)
        ]

    @classmethod
    def from_list(cls, rows, auc: float) -> RocCurve:
        points = tuple((float(r[0]), float(r[1])) for r in rows)
        thresholds = tuple(math.inf if r[2] is None else float(r[2]) for r in rows)
        return cls(points, thresholds, float(auc))


def roc_points(scores, labels) -> RocCurve:
    """One ROC vertex per distinct score, highest first, after the (0, 0) origin.

    The first threshold is ``+inf`` (nothing flagged).  The stored area is the
    trapezoidal integral, accumulated in integer counts so it is exact up to
    the final division.
    """
    s, y = _scores_labels(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    n_pos = int(y.sum())
    n_neg = y.shape[0] - n_pos
    last = np.concatenate((np.flatnonzero(np.diff(s)), [s.shape[0] - 1]))
    tp = np.concatenate(([0], np.cumsum(y)[last]))
    fp = np.concatenate(([0], np.cumsum(1 - y)[last]))
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    points = tuple(zip((fp / n_neg).tolist(), (tp / n_pos).tolist()))
    thresholds = (math.inf, *s[last].tolist())
    return RocCurve(points, thresholds, twice_area / (2.0 * n_pos * n_neg))


def trapezoid_area(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    return float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2.0))


@dataclass(frozen=True)
class CalibrationBin:
    lower: float
    upper: float
    mean_predicted: float
    observed_frequency: float
    count: int


@dataclass(frozen=True)
class CalibrationCurve:
    bins: tuple[CalibrationBin, ...]
    n_bins: int
    strategy: str = "equal-width"

    @property
    def n(self) -> int:
        return sum(b.count for b in self.bins)

    def to_list(self):
        return [[b.mean_predicted, b.observed_frequency, b.count] for b in self.bins]

    @classmethod
    def from_list(cls, rows, n_bins: int = 10) -> CalibrationCurve:
        """Rebuild from ``[mean_predicted, observed, count]`` rows; edges follow from the mean."""
        edges = np.linspace(0.0, 1.0, n_bins + 1)
        bins = []
        for mean, obs, count in rows:
            k = int(np.clip(np.searchsorted(edges, mean, side="right") - 1, 0, n_bins - 1))
            bins.append(CalibrationBin(float(edges[k]), float(edges[k + 1]), float(mean), float(obs), int(count)))
        return cls(tuple(bins), n_bins)


def calibration_curve(scores, labels, n_bins: int = 10) -> CalibrationCurve:
    """Equal-width reliability bins over [0, 1]; the last bin is closed on the right.

    Empty bins are dropped.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    s, y = _scores_labels(scores, labels, need_both=False)
    if s.size and (s.min() < 0 or s.max() > 1):
        raise ValueError("scores must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, n_bins - 1)
    bins = []
    for k in range(n_bins):
        member = idx == k
        count = int(member.sum())
        if count == 0:
            continue
        bins.append(
            CalibrationBin(
                float(edges[k]),
                float(edges[k + 1]),
                float(s[member].mean()),
                float(y[member].mean()),
                count,
            )
        )
    return CalibrationCurve(tuple(bins), n_bins)


def brier_score(scores, labels) -> float:
    s, y = _scores_labels(scores, labels, need_both=False)
    return float(np.mean((s - y) ** 2))


# -- recalibration ------------------------------------------------------------

PLATT_CLIP = 1e-6


def _logit(p):
    p = np.clip(np.asarray(p, dtype=np.float64), PLATT_CLIP, 1.0 - PLATT_CLIP)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class Recalibrator:
    kind: str  # "platt" or "isotonic"
    a: float = 1.0
    b: float = 0.0
    breakpoints: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def apply(self, scores) -> np.ndarray:
        from riskstrat.model import sigmoid

        s = np.asarray(scores, dtype=np.float64)
        if self.kind == "platt":
            return sigmoid(self.a * _logit(s) + self.b)
        # step function: value of the largest breakpoint not above s
        pos = np.searchsorted(self.breakpoints, s, side="right") - 1
        return self.values[np.clip(pos, 0, self.values.shape[0] - 1)]


def fit_platt(scores, labels, max_iter: int = 100) -> Recalibrator:
    """Maximum-likelihood fit of ``sigmoid(a * logit(score) + b)`` by Newton's method.

    Scores are clipped to [1e-6, 1 - 1e-6] before the logit.  When the logits
    carry no information (e.g. all equal) the least-squares Newton step leaves
    ``a`` at 1 and only ``b`` moves.
    """
    from riskstrat.model import sigmoid

    s, y = _scores_labels(scores, labels)
    x = _logit(s)
    design = np.column_stack((x, np.ones_like(x)))
    theta = np.array([1.0, 0.0])

    def nll(t):
        z = design @ t
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    loss = nll(theta)
    for _ in range(max_iter):
        p = sigmoid(design @ theta)
        grad = design.T @ (p - y) / y.shape[0]
        if np.max(np.abs(grad)) < 1e-12:
            break
        hess = (design * (p * (1 - p))[:, None]).T @ design / y.shape[0]
        delta = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * delta
            cand_loss = nll(cand)
            if cand_loss <= loss or t < 1e-10:
                break
            t *= 0.5
        if not (np.all(np.isfinite(cand)) and math.isfinite(cand_loss)):
            raise NonFinite("Platt scaling diverged")
        converged = abs(loss - cand_loss) < 1e-15
        theta, loss = cand, cand_loss
        if converged:
            break
    return Recalibrator("platt", a=float(theta[0]), b=float(theta[1]))


def fit_isotonic(scores, labels) -> Recalibrator:
    """Pool-adjacent-violators on (score, label) pairs, tied scores pooled first.

    Returns a nondecreasing step function with one breakpoint per distinct score.
    """
    s, y = _scores_labels(scores, labels)
    order = np.argsort(s, kind="mergesort")
    s, y = s[order], y[order].astype(np.float64)
    starts = np.concatenate(([0], np.flatnonzero(np.diff(s)) + 1))
    counts = np.diff(np.concatenate((starts, [s.shape[0]]))).astype(np.float64)
    means = np.add.reduceat(y, starts) / counts
    fitted = kernels.pava(means, counts)
    return Recalibrator("isotonic", breakpoints=s[starts], values=fitted)


# -- report -------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    roc: RocCurve
    calibration: CalibrationCurve
    brier: float
    folds: tuple = ()

    @property
    def auc(self) -> float:
        return self.roc.auc

    def to_dict(self) -> dict:
        return {
            "auc": self.roc.auc,
            "roc": self.roc.to_list(),
            "calibration": self.calibration.to_list(),
            "n_bins": self.calibration.n_bins,
            "brier": self.brier,
            "folds": [{"auc": None if math.isnan(f.auc) else f.auc, "brier": f.brier, "n_test": f.n_test} for f in self.folds],
        }


def evaluate(scores, labels, n_bins: int = 10, folds=()) -> EvalReport:
    return EvalReport(
        roc_points(scores, labels),
        calibration_curve(scores, labels, n_bins),
        brier_score(scores, labels),
        tuple(folds),
    )
