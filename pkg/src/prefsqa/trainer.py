"""Score-table stand-in for an SQA network, trained on derived preferences.

The model predicts ``theta[utterance] + bias[listener]`` for a rating. The
preference objective is the squared error between ``alpha(pred_a - pred_b)``
and ``sign(s_a - s_b)`` on same-listener rating pairs; the direct objective
regresses ratings themselves.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, Scale
from .errors import ParseError, ValidationError
from .pairgen import sample_training_pairs
from .preference import alpha


class Objective(str, enum.Enum):
    PREFERENCE = "preference"
    DIRECT = "direct"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    pairs_per_epoch: int | None = None  # None: number of ratings
    batch_size: int = 64
    seed: int = 0
    objective: Objective = Objective.PREFERENCE

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        if not self.learning_rate > 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValidationError(f"invalid training configuration {self}")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < 1:
            raise ValidationError("pairs_per_epoch must be positive")


@dataclass
class ScoreModel:
    utterances: list[str]
    listeners: list[str]
    theta: np.ndarray
    bias: np.ndarray
    _utt_pos: dict[str, int] = field(init=False, repr=False)
    _lis_pos: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._utt_pos = {u: i for i, u in enumerate(self.utterances)}
        self._lis_pos = {l: i for i, l in enumerate(self.listeners)}

    @classmethod
    def zeros(cls, ds: Dataset) -> "ScoreModel":
        return cls(list(ds.utterances), list(ds.listeners),
                   np.zeros(len(ds.utterances)), np.zeros(len(ds.listeners)))

    def predict(self, utterance_id: str, listener_id: str | None = None) -> float:
        try:
            u = self._utt_pos[utterance_id]
        except KeyError:
            raise ValidationError(f"unknown utterance {utterance_id!r}") from None
        lis = self._lis_pos.get(listener_id) if listener_id is not None else None
        return float(self.theta[u] + (self.bias[lis] if lis is not None else 0.0))

    def predict_dataset(self, ds: Dataset) -> np.ndarray:
        """Prediction for every rating of ``ds``."""
        try:
            u = np.array([self._utt_pos[x] for x in ds.utterances])[ds.utterance_index]
        except KeyError as exc:
            raise ValidationError(f"unknown utterance {exc.args[0]!r}") from None
        lmap = np.array([self._lis_pos.get(x, -1) for x in ds.listeners], dtype=np.int64)
        lis = lmap[ds.listener_index] if len(ds) else np.zeros(0, dtype=np.int64)
        b = np.where(lis >= 0, self.bias[np.maximum(lis, 0)] if len(self.bias) else 0.0, 0.0)
        return self.theta[u] + b

    def utterance_scores(self) -> dict[str, float]:
        return dict(zip(self.utterances, self.theta.tolist()))

    def save(self, theta_path: str | Path, bias_path: str | Path) -> None:
        for path, head, ids, vals in ((theta_path, ("utterance_id", "theta"), self.utterances, self.theta),
                                      (bias_path, ("listener_id", "bias"), self.listeners, self.bias)):
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(head)
                for i, v in zip(ids, vals.tolist()):
                    w.writerow((i, repr(v)))

    @classmethod
    def load(cls, theta_path: str | Path, bias_path: str | Path) -> "ScoreModel":
        tables = []
        for path, head in ((theta_path, ("utterance_id", "theta")), (bias_path, ("listener_id", "bias"))):
            ids, vals = [], []
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                if tuple(next(reader, ())) != head:
                    raise ParseError(f"{path}: expected header {','.join(head)}", line=1)
                for row in reader:
                    if len(row) != 2:
                        raise ParseError(f"{path}: expected 2 columns", line=reader.line_num)
                    ids.append(row[0])
                    vals.append(float(row[1]))
            tables.append((ids, np.array(vals, dtype=np.float64)))
        (utts, theta), (lis, bias) = tables
        return cls(utts, lis, theta, bias)


def predict(model: ScoreModel, utterance_id: str, listener_id: str | None = None) -> float:
    return model.predict(utterance_id, listener_id)


class _Problem:
    """Rating-level index arrays shared by the loss and gradient code."""

    def __init__(self, ds: Dataset):
        self.n_utt = len(ds.utterances)
        self.n_lis = len(ds.listeners)
        self.utt = ds.utterance_index
        self.lis = ds.listener_index
        self.s = ds.scores

    def pref_loss_grad(self, theta, bias, first, second, need_grad=True):
        x = (theta[self.utt[first]] - theta[self.utt[second]]) + (bias[self.lis[first]] - bias[self.lis[second]])
        p = alpha(x)
        y = np.sign(self.s[first] - self.s[second])
        r = p - y
        loss = float(np.mean(r * r))
        if not need_grad:
            return loss, None, None
        g = 2.0 * r * (1.0 - p * p) / 2.0 / len(first)
        g_theta = (np.bincount(self.utt[first], g, self.n_utt) - np.bincount(self.utt[second], g, self.n_utt))
        g_bias = (np.bincount(self.lis[first], g, self.n_lis) - np.bincount(self.lis[second], g, self.n_lis))
        return loss, g_theta, g_bias

    def direct_loss_grad(self, theta, bias, rows, need_grad=True):
        r = theta[self.utt[rows]] + bias[self.lis[rows]] - self.s[rows]
        loss = float(np.mean(r * r))
        if not need_grad:
            return loss, None, None
        g = 2.0 * r / len(rows)
        return loss, np.bincount(self.utt[rows], g, self.n_utt), np.bincount(self.lis[rows], g, self.n_lis)


def _check_trainable(ds: Dataset, cfg: TrainConfig) -> None:
    if ds.scale is not Scale.NORM11:
        raise ValidationError("training expects a normalized dataset (scores in [-1, 1])")
    if len(ds) == 0:
        raise ValidationError("cannot train on an empty dataset")


def _batches(cfg: TrainConfig, ds: Dataset, rng: np.random.Generator):
    """Yield index batches for one epoch."""
    if cfg.objective is Objective.PREFERENCE:
        n = cfg.pairs_per_epoch or len(ds)
        first, second = sample_training_pairs(ds, n, rng)
        for lo in range(0, n, cfg.batch_size):
            yield first[lo:lo + cfg.batch_size], second[lo:lo + cfg.batch_size]
    else:
        n = cfg.pairs_per_epoch or len(ds)
        rows = rng.integers(0, len(ds), size=n) if cfg.pairs_per_epoch else rng.permutation(len(ds))
        for lo in range(0, n, cfg.batch_size):
            yield (rows[lo:lo + cfg.batch_size],)


def train(ds: Dataset, cfg: TrainConfig = TrainConfig(), history: list | None = None) -> ScoreModel:
    """Mini-batch gradient descent from an all-zero table.

    If ``history`` is a list, the mean batch loss of every epoch is appended.
    """
    _check_trainable(ds, cfg)
    if cfg.objective is Objective.PREFERENCE:
        sample_training_pairs(ds, 1, 0)  # raises if no listener has two ratings
    prob = _Problem(ds)
    model = ScoreModel.zeros(ds)
    theta, bias = model.theta, model.bias
    rng = np.random.default_rng(cfg.seed)
    lossfn = prob.pref_loss_grad if cfg.objective is Objective.PREFERENCE else prob.direct_loss_grad
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        total, count = 0.0, 0
        for batch in _batches(cfg, ds, rng):
            loss, g_theta, g_bias = lossfn(theta, bias, *batch)
            theta -= lr * g_theta
            bias -= lr * g_bias
            total += loss * len(batch[0])
            count += len(batch[0])
        if history is not None:
            history.append(total / count)
    return model


def full_batch_loss(model: ScoreModel, ds: Dataset, cfg: TrainConfig, batch) -> float:
    prob = _Problem(ds)
    fn = prob.pref_loss_grad if cfg.objective is Objective.PREFERENCE else prob.direct_loss_grad
    return fn(model.theta, model.bias, *batch, need_grad=False)[0]


def fixed_batch(ds: Dataset, cfg: TrainConfig, seed: int | None = None):
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    if cfg.objective is Objective.PREFERENCE:
        return sample_training_pairs(ds, cfg.batch_size, rng)
    return (rng.integers(0, len(ds), size=cfg.batch_size),)


def grad_check(ds: Dataset, cfg: TrainConfig, n_probes: int = 20, epsilon: float = 1e-5,
               model: ScoreModel | None = None, batch=None) -> float:
    """Max relative error between the analytic gradient and central differences.

    Uses a fixed batch drawn from ``cfg.seed`` and, unless ``model`` is
    given, parameters drawn from N(0, 0.5^2). Probes are drawn among the
    parameters the batch touches.
    """
    _check_trainable(ds, cfg)
    prob = _Problem(ds)
    rng = np.random.default_rng(cfg.seed + 1)
    if model is None:
        theta = rng.normal(0.0, 0.5, prob.n_utt)
        bias = rng.normal(0.0, 0.5, prob.n_lis)
    else:
        theta, bias = model.theta.copy(), model.bias.copy()
    if batch is None:
        batch = fixed_batch(ds, cfg)
    fn = prob.pref_loss_grad if cfg.objective is Objective.PREFERENCE else prob.direct_loss_grad
    _, g_theta, g_bias = fn(theta, bias, *batch)

    rows = np.concatenate([np.asarray(b) for b in batch])
    touched = [("theta", i) for i in np.unique(prob.utt[rows])] + [("bias", i) for i in np.unique(prob.lis[rows])]
    picks = rng.choice(len(touched), size=min(n_probes, len(touched)), replace=False)
    worst = 0.0
    for p in picks:
        kind, i = touched[p]
        vec, g = (theta, g_theta) if kind == "theta" else (bias, g_bias)
        orig = vec[i]
        vec[i] = orig + epsilon
        up = fn(theta, bias, *batch, need_grad=False)[0]
        vec[i] = orig - epsilon
        down = fn(theta, bias, *batch, need_grad=False)[0]
        vec[i] = orig
        numeric = (up - down) / (2.0 * epsilon)
        worst = max(worst, abs(g[i] - numeric) / max(abs(g[i]), 1e-8))
    return worst
