"""Virtual-screening and pose metrics.

Conventions shared by every rank metric: higher score means "more likely
active"; ROC curves step through distinct score thresholds (tied scores
move together, giving diagonal segments); list-order metrics (AUPRC, EF)
sort by descending score with ties kept in input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError, UndefinedMetricError

POSITIVE, NEGATIVE, DISCARD = "positive", "negative", "discard"


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __init__(self, scores, labels):
        s = np.asarray(scores, dtype=np.float64).reshape(-1)
        y = np.asarray(labels).reshape(-1)
        if len(s) != len(y):
            raise ShapeError(f"{len(s)} scores vs {len(y)} labels")
        if not np.all(np.isin(y, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(np.int64))

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self.labels) - self.n_pos


def _as_set(s, labels=None) -> ScoredSet:
    if isinstance(s, ScoredSet):
        return s
    return ScoredSet(s, labels)


def _require_both(s: ScoredSet, metric: str) -> None:
    if s.n_pos == 0 or s.n_neg == 0:
        raise UndefinedMetricError(f"undefined metric: {metric} needs both classes")


def _descending(s: ScoredSet) -> np.ndarray:
    return np.argsort(-s.scores, kind="stable")


def roc_points(s: ScoredSet):
    """(fpr, tpr) arrays starting at (0, 0), one point per distinct threshold."""
    order = _descending(s)
    sc, y = s.scores[order], s.labels[order]
    last = np.r_[np.nonzero(np.diff(sc))[0], len(sc) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    fpr = np.r_[0.0, fp / s.n_neg]
    tpr = np.r_[0.0, tp / s.n_pos]
    return fpr, tpr


def auroc(s, labels=None) -> float:
    """P(random positive outranks random negative), ties counting one half."""
    s = _as_set(s, labels)
    _require_both(s, "AUROC")
    # average ranks handle ties exactly
    order = np.argsort(s.scores, kind="stable")
    sc = s.scores[order]
    ranks = np.empty(len(sc))
    i = 0
    while i < len(sc):
        j = i
        while j + 1 < len(sc) and sc[j + 1] == sc[i]:
            j += 1
        ranks[i:j + 1] = (i + j) / 2.0 + 1.0
        i = j + 1
    r = np.empty(len(sc))
    r[order] = ranks
    n1, n0 = s.n_pos, s.n_neg
    u = r[s.labels == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def auprc(s, labels=None) -> float:
    """Step-wise average precision over the descending-score list."""
    s = _as_set(s, labels)
    if s.n_pos == 0:
        raise UndefinedMetricError("undefined metric: AUPRC needs at least one positive")
    y = s.labels[_descending(s)]
    hits = np.cumsum(y)
    ranks = np.arange(1, len(y) + 1)
    return float(np.sum((hits / ranks)[y == 1]) / s.n_pos)


def _tpr_at(fpr: np.ndarray, tpr: np.ndarray, x: float) -> float:
    """TPR of the ROC curve at FPR ``x``, linear between achieved points.

    Where the curve is vertical at exactly ``x`` the upper value is used.
    """
    k = int(np.searchsorted(fpr, x, side="right"))
    if k >= len(fpr):
        return float(tpr[-1])
    f0, t0, f1, t1 = fpr[k - 1], tpr[k - 1], fpr[k], tpr[k]
    return float(t0 + (t1 - t0) * (x - f0) / (f1 - f0))


def adjusted_logauc(s, labels=None, lam: float = 0.001) -> float:
    """ROC area against log10(FPR) on [lam, 1], normalized, minus the random baseline."""
    if not 0.0 < lam < 1.0:
        raise UndefinedMetricError(f"undefined metric: degenerate LogAUC range lambda={lam}")
    s = _as_set(s, labels)
    _require_both(s, "LogAUC")
    fpr, tpr = roc_points(s)
    # curve restricted to [lam, 1]: start point, interior achieved points, end
    pts_f = [lam]
    pts_t = [_tpr_at(fpr, tpr, lam)]
    for f, t in zip(fpr, tpr):
        if f > lam:
            pts_f.append(float(f))
            pts_t.append(float(t))
    area = 0.0
    for k in range(len(pts_f) - 1):
        f0, f1 = pts_f[k], pts_f[k + 1]
        if f1 == f0:
            continue
        t0, t1 = pts_t[k], pts_t[k + 1]
        slope = (t1 - t0) / (f1 - f0)
        # integral of (t0 + slope (f - f0)) d ln f
        area += (t0 - slope * f0) * math.log(f1 / f0) + slope * (f1 - f0)
    norm = math.log(1.0 / lam)
    random_area = (1.0 - lam) / norm
    return float(area / norm - random_area)


def roc_enrichment(s, labels=None, fpr: float = 0.01) -> float:
    """TPR where the ROC curve reaches ``fpr``, divided by ``fpr``."""
    if not 0.0 < fpr <= 1.0:
        raise ValueError("fpr must lie in (0, 1]")
    s = _as_set(s, labels)
    _require_both(s, "ROC enrichment")
    f, t = roc_points(s)
    return _tpr_at(f, t, fpr) / fpr


def top_count(n: int, fraction: float) -> int:
    """ceil(fraction * n), ignoring float noise like 0.07 * 100 = 7.000000000000001."""
    return max(1, min(n, int(math.ceil(round(fraction * n, 9)))))


def enrichment_factor(s, labels=None, fraction: float = 0.01) -> float:
    """Active rate among the top ``ceil(fraction * N)`` divided by the overall active rate."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    s = _as_set(s, labels)
    if s.n_pos == 0:
        raise UndefinedMetricError("undefined metric: enrichment factor needs an active")
    n = len(s.labels)
    k = top_count(n, fraction)
    hits = int(s.labels[_descending(s)[:k]].sum())
    return (hits / k) / (s.n_pos / n)


def balanced_accuracy(s, labels=None, threshold: float = 0.5) -> float:
    """Mean of TPR and TNR with ``score >= threshold`` predicted positive."""
    s = _as_set(s, labels)
    _require_both(s, "balanced accuracy")
    pred = s.scores >= threshold
    pos = s.labels == 1
    tpr = np.sum(pred & pos) / s.n_pos
    tnr = np.sum(~pred & ~pos) / s.n_neg
    return float((tpr + tnr) / 2.0)


def rmsd(pose_a, pose_b) -> float:
    """Root-mean-square displacement over identically ordered atoms (no fitting)."""
    a = np.asarray(pose_a, dtype=np.float64)
    b = np.asarray(pose_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ShapeError(f"rmsd: coordinate shapes {a.shape} and {b.shape} differ")
    if len(a) == 0:
        raise ShapeError("rmsd of zero atoms")
    d = a - b
    return float(math.sqrt(np.sum(d * d) / len(a)))


def pose_label(rmsd_value: float) -> str:
    """Below 2 Å positive, above 4 Å negative, otherwise discarded."""
    if rmsd_value < 2.0:
        return POSITIVE
    if rmsd_value > 4.0:
        return NEGATIVE
    return DISCARD


METRICS = {
    "auroc": auroc,
    "logauc": adjusted_logauc,
    "auprc": auprc,
    "bal_acc": balanced_accuracy,
    "roc_enrich": roc_enrichment,
    "ef": enrichment_factor,
}


def metric_row(scores: Sequence[float], labels: Sequence[int], roc_fpr: float = 0.01,
               ef_fraction: float = 0.01, threshold: float = 0.5) -> dict:
    """Every metric for one scored set; undefined ones become None with an ``error`` note."""
    s = ScoredSet(scores, labels)
    row = {"n": len(s.labels), "n_actives": s.n_pos}
    errors = []
    calls = {
        "auroc": lambda: auroc(s),
        "logauc": lambda: adjusted_logauc(s),
        "auprc": lambda: auprc(s),
        "bal_acc": lambda: balanced_accuracy(s, threshold=threshold),
        "roc_enrich": lambda: roc_enrichment(s, fpr=roc_fpr),
        "ef": lambda: enrichment_factor(s, fraction=ef_fraction),
    }
    for name, fn in calls.items():
        try:
            row[name] = fn()
        except UndefinedMetricError as exc:
            row[name] = None
            if str(exc) not in errors:
                errors.append(str(exc))
    if errors:
        row["error"] = "; ".join(errors)
    return row
