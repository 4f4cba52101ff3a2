"""Ranking, rank/linear correlation and the paired t-test."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

from .errors import ValidationError


def _values(x) -> Mapping[str, float]:
    if hasattr(x, "ranking_values"):
        return x.ranking_values()
    if hasattr(x, "scores") and isinstance(x.scores, Mapping):
        return x.scores
    return x


def rank(scores) -> dict[str, float]:
    """Rank 1 for the highest utility; tied systems share their average rank."""
    vals = _values(scores)
    if len(vals) == 0:
        raise ValidationError("cannot rank an empty score set")
    keys = list(vals)
    arr = np.array([vals[k] for k in keys], dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("cannot rank non-finite scores")
    r = rankdata(-arr, method="average")
    return dict(zip(keys, r.tolist()))


def lcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson product-moment correlation."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValidationError("need two equal-length sequences of at least 2 values")
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        raise ValidationError("correlation is undefined for a constant input")
    r = float(a @ b) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


def srcc(x, y) -> float:
    """Spearman correlation as the Pearson correlation of average ranks.

    Both inputs map system ids to scores and must cover the same systems.
    """
    vx, vy = _values(x), _values(y)
    if set(vx) != set(vy):
        missing = set(vx) ^ set(vy)
        raise ValidationError(f"score sets cover different systems, e.g. {sorted(missing)[:3]}")
    if len(vx) < 2:
        raise ValidationError("need at least 2 systems")
    rx, ry = rank(vx), rank(vy)
    keys = list(vx)
    return lcc([rx[k] for k in keys], [ry[k] for k in keys])


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) of Student's t."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test on ``a - b``; returns (t, p)."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValidationError("need two equal-length sequences of at least 2 values")
    d = x - y
    n = len(d)
    sd = float(np.std(d, ddof=1))
    # a constant shift between a and b leaves only rounding noise in d
    if sd <= 1e-12 * max(1.0, float(np.abs(d).max())):
        raise ValidationError("paired differences have zero variance")
    t = float(d.mean()) / (sd / math.sqrt(n))
    return t, student_t_sf2(t, n - 1)
