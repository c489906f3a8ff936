"""Classification metrics with fake (label 1) as the positive class."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

MODES = ("macro", "binary")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: Optional[float]
    tp: int
    tn: int
    fp: int
    fn: int
    mode: str = "macro"

    def as_dict(self) -> dict:
        return asdict(self)


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    return p, r, _safe_div(2 * p * r, p + r)


def auc_mann_whitney(y_true, scores) -> Optional[float]:
    """Probability that a random fake outscores a random true item, ties counted 1/2.

    ``None`` when only one class is present.
    """
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s)  # average ranks give the 1/2 tie credit
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(y_true, scores, mode: str = "macro", threshold: float = 0.5) -> MetricsReport:
    """Confusion counts use ``score > threshold`` as the fake verdict."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=np.float64)
    if y.size == 0:
        raise ValueError("nothing to evaluate")
    pred = (s > threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    if mode == "binary":
        p, r, f = _prf(tp, fp, fn)
    else:
        pf, rf, ff = _prf(tp, fp, fn)
        pt, rt, ft = _prf(tn, fn, fp)
        p, r, f = (pf + pt) / 2, (rf + rt) / 2, (ff + ft) / 2
    return MetricsReport((tp + tn) / y.size, p, r, f, auc_mann_whitney(y, s), tp, tn, fp, fn, mode)
