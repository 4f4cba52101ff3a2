"""Preference function, ground-truth preferences and win/draw/loss thresholds."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError


class Outcome(enum.IntEnum):
    LOSS = -1
    DRAW = 0
    WIN = 1


class ThresholdMethod(str, enum.Enum):
    ER = "er"
    EER = "eer"
    ND = "nd"


def alpha(x):
    """2 * sigmoid(x) - 1, evaluated as tanh(x / 2) so it stays exactly odd."""
    if np.ndim(x):
        return np.tanh(np.asarray(x, dtype=np.float64) / 2.0)
    return math.tanh(float(x) / 2.0)


def alpha_grad(x):
    a = alpha(x)
    return (1.0 - a * a) / 2.0


def pref_pred(score_a, score_b):
    """Predicted preference of a over b, in (-1, 1)."""
    return alpha(np.subtract(score_a, score_b))


def pref_gt(s_a, s_b):
    """Sign of the score difference; an :class:`Outcome` for scalars, an int array otherwise."""
    if np.ndim(s_a) or np.ndim(s_b):
        return np.sign(np.subtract(s_a, s_b)).astype(np.int64)
    return Outcome(int(np.sign(s_a - s_b)))


@dataclass(frozen=True)
class Thresholds:
    t_lose: float
    t_win: float

    def __post_init__(self):
        if not (-1.0 < self.t_lose <= 0.0 <= self.t_win < 1.0):
            raise ValidationError(f"invalid thresholds t_lose={self.t_lose}, t_win={self.t_win}")

    def classify(self, p):
        """Win above ``t_win``, Loss below ``t_lose``, Draw otherwise."""
        if np.ndim(p):
            p = np.asarray(p, dtype=np.float64)
            return np.where(p > self.t_win, 1, np.where(p < self.t_lose, -1, 0)).astype(np.int64)
        if p > self.t_win:
            return Outcome.WIN
        if p < self.t_lose:
            return Outcome.LOSS
        return Outcome.DRAW

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps({"t_lose": self.t_lose, "t_win": self.t_win})
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, text_or_path: str | Path) -> "Thresholds":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text_or_path).read_text(encoding="utf-8")
        d = json.loads(text)
        return cls(float(d["t_lose"]), float(d["t_win"]))


def classify(p, thresholds: Thresholds):
    return thresholds.classify(p)


def thresholds_er() -> Thresholds:
    return Thresholds(-1.0 / 3.0, 1.0 / 3.0)


def thresholds_nd() -> Thresholds:
    return Thresholds(0.0, 0.0)


def _eer_threshold(preds: np.ndarray, positive: np.ndarray, upper: bool) -> float:
    # Candidates are the midpoints of consecutive unique preds plus one value
    # beyond each end. upper=True scores "pred > t" as positive, else "pred < t".
    u = np.unique(preds)
    cands = np.concatenate([[u[0] - 1.0], (u[:-1] + u[1:]) / 2.0, [u[-1] + 1.0]])
    pos = np.sort(preds[positive])
    neg = np.sort(preds[~positive])
    if upper:
        fn = np.searchsorted(pos, cands, side="right")             # pos with pred <= t
        fp = len(neg) - np.searchsorted(neg, cands, side="right")  # neg with pred > t
    else:
        fn = len(pos) - np.searchsorted(pos, cands, side="left")   # pos with pred >= t
        fp = np.searchsorted(neg, cands, side="left")              # neg with pred < t
    # |FPR - FNR| scaled by n_pos * n_neg, exact in integers
    gap = np.abs(fp * len(pos) - fn * len(neg))
    best = np.flatnonzero(gap == gap.min())
    return float(cands[best[np.argmin(np.abs(cands[best]))]])


def fit_eer_thresholds(preds, truths) -> Thresholds:
    """Equal-error-rate thresholds for "Win vs not" and "Loss vs not".

    Each threshold minimises |FPR - FNR| over sample midpoints; ties go to
    the candidate closest to zero. Results are clamped to t_lose <= 0 <= t_win.
    """
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray([int(x) for x in truths], dtype=np.int64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValidationError("preds and truths must be 1-d sequences of equal length")
    if len(p) < 2:
        raise ValidationError("need at least two predictions")
    if not np.all(np.isfinite(p)):
        raise ValidationError("predictions must be finite")
    win, loss = t == 1, t == -1
    if win.all() or not win.any():
        raise ValidationError("truths need both Win and non-Win outcomes")
    if loss.all() or not loss.any():
        raise ValidationError("truths need both Loss and non-Loss outcomes")
    t_win = max(_eer_threshold(p, win, upper=True), 0.0)
    t_lose = min(_eer_threshold(p, loss, upper=False), 0.0)
    if t_win < t_lose:
        raise ValidationError(f"EER thresholds cross: t_lose={t_lose}, t_win={t_win}")
    # keep inside (-1, 1) even when a class boundary sits beyond the data
    return Thresholds(float(max(t_lose, np.nextafter(-1.0, 0.0))), float(min(t_win, np.nextafter(1.0, 0.0))))


def thresholds_for(method: ThresholdMethod | str, preds=None, truths=None) -> Thresholds:
    method = ThresholdMethod(method)
    if method is ThresholdMethod.ER:
        return thresholds_er()
    if method is ThresholdMethod.ND:
        return thresholds_nd()
    if preds is None or truths is None:
        raise ValidationError("EER thresholds need development predictions and truths")
    return fit_eer_thresholds(preds, truths)
