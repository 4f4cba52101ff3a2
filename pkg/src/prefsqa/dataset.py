"""Subjective-score datasets: ratings, CSV I/O, ground-truth system scores and
a synthetic generator with VoiceMOS-like proportions."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

CSV_HEADER = ("system_id", "utterance_id", "listener_id", "score")
LATENT_HEADER = ("system_id", "latent_quality")


class Scale(str, enum.Enum):
    MOS15 = "mos15"
    NORM11 = "norm11"


@dataclass(frozen=True)
class Rating:
    system_id: str
    utterance_id: str
    listener_id: str
    score: float


@dataclass(frozen=True)
class SystemTruth:
    """Per-system reference score (mean rating or latent quality)."""

    scores: dict[str, float]

    def __getitem__(self, system_id: str) -> float:
        return self.scores[system_id]

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def systems(self) -> list[str]:
        return list(self.scores)


def _codes(labels: Sequence[str]) -> tuple[list[str], np.ndarray]:
    uniq = sorted(set(labels))
    lookup = {lab: i for i, lab in enumerate(uniq)}
    return uniq, np.fromiter((lookup[lab] for lab in labels), dtype=np.int64, count=len(labels))


class Dataset:
    """Immutable collection of ratings.

    Ratings keep their input order. Systems, utterances and listeners are
    integer-coded in sorted id order; the coded arrays (``system_index``,
    ``utterance_index``, ``listener_index``, ``scores``) are read-only views
    used by the vectorised samplers.
    """

    def __init__(self, ratings: Iterable[Rating], scale: Scale | str = Scale.MOS15):
        self._ratings: tuple[Rating, ...] = tuple(ratings)
        self.scale = Scale(scale)

        seen: dict[tuple[str, str], int] = {}
        for i, r in enumerate(self._ratings):
            if not math.isfinite(r.score):
                raise ValidationError(f"rating {i} has non-finite score {r.score!r}")
            key = (r.utterance_id, r.listener_id)
            if key in seen:
                raise ValidationError(
                    f"duplicate rating for utterance {key[0]!r} by listener {key[1]!r} "
                    f"(ratings {seen[key]} and {i})"
                )
            seen[key] = i

        self.systems, sys_idx = _codes([r.system_id for r in self._ratings])
        self.utterances, utt_idx = _codes([r.utterance_id for r in self._ratings])
        self.listeners, lis_idx = _codes([r.listener_id for r in self._ratings])
        scores = np.array([r.score for r in self._ratings], dtype=np.float64)
        for arr in (sys_idx, utt_idx, lis_idx, scores):
            arr.setflags(write=False)
        self.system_index = sys_idx
        self.utterance_index = utt_idx
        self.listener_index = lis_idx
        self.scores = scores

    @classmethod
    def _from_arrays(cls, ds: "Dataset", scores: np.ndarray, scale: Scale) -> "Dataset":
        return cls(
            (Rating(r.system_id, r.utterance_id, r.listener_id, float(s))
             for r, s in zip(ds._ratings, scores)),
            scale,
        )

    def __len__(self) -> int:
        return len(self._ratings)

    def __iter__(self):
        return iter(self._ratings)

    def __getitem__(self, i: int) -> Rating:
        return self._ratings[i]

    def __repr__(self) -> str:
        return (f"Dataset({len(self)} ratings, {len(self.systems)} systems, "
                f"{len(self.listeners)} listeners, scale={self.scale.value})")

    @property
    def ratings(self) -> tuple[Rating, ...]:
        return self._ratings

    @cached_property
    def by_system(self) -> dict[str, tuple[int, ...]]:
        return _group(self.systems, self.system_index)

    @cached_property
    def by_listener(self) -> dict[str, tuple[int, ...]]:
        return _group(self.listeners, self.listener_index)

    @cached_property
    def by_utterance(self) -> dict[str, tuple[int, ...]]:
        return _group(self.utterances, self.utterance_index)

    @cached_property
    def utterance_system(self) -> dict[str, str]:
        return {r.utterance_id: r.system_id for r in self._ratings}

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset((self._ratings[i] for i in indices), self.scale)


def _group(labels: list[str], codes: np.ndarray) -> dict[str, tuple[int, ...]]:
    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(len(labels) + 1))
    return {lab: tuple(order[bounds[i]:bounds[i + 1]].tolist()) for i, lab in enumerate(labels)}


def load_csv(path: str | Path) -> Dataset:
    """Read a ``system_id,utterance_id,listener_id,score`` file (MOS scale)."""
    ratings = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}, got {header!r}", line=1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", line=line)
            try:
                score = float(row[3])
            except ValueError:
                raise ParseError(f"non-numeric score {row[3]!r}", line=line) from None
            if not math.isfinite(score):
                raise ParseError(f"non-finite score {row[3]!r}", line=line)
            ratings.append(Rating(row[0], row[1], row[2], score))
    return Dataset(ratings, Scale.MOS15)


def _format_score(score: float, scale: Scale, integral: bool) -> str:
    if integral:
        return str(int(score))
    if scale is Scale.NORM11:
        return f"{score:.6f}"
    return repr(float(score))


def save_csv(ds: Dataset, path: str | Path) -> None:
    """Write ratings in input order.

    Integer MOS is written as integers, normalized scores with 6 decimals,
    anything else with full round-trip precision.
    """
    integral = ds.scale is Scale.MOS15 and bool(np.all(ds.scores == np.round(ds.scores)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in ds:
            w.writerow((r.system_id, r.utterance_id, r.listener_id,
                        _format_score(r.score, ds.scale, integral)))


def save_truth_csv(truth: SystemTruth, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LATENT_HEADER)
        for sid, q in truth.scores.items():
            w.writerow((sid, repr(float(q))))


def load_truth_csv(path: str | Path) -> SystemTruth:
    scores = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 2 or header[0].strip() != "system_id":
            raise ParseError(f"expected header system_id,<score>, got {header!r}", line=1)
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", line=reader.line_num)
            try:
                scores[row[0]] = float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric value {row[1]!r}", line=reader.line_num) from None
    return SystemTruth(scores)


def normalize(ds: Dataset) -> Dataset:
    """Map MOS in [1, 5] affinely onto [-1, 1]."""
    if ds.scale is not Scale.MOS15:
        raise ValidationError("dataset is already normalized")
    return Dataset._from_arrays(ds, (ds.scores - 3.0) / 2.0, Scale.NORM11)


def system_truth(ds: Dataset) -> SystemTruth:
    """Arithmetic mean of every rating of each system."""
    if len(ds) == 0:
        raise ValidationError("cannot compute system scores of an empty dataset")
    # fsum keeps the mean independent of rating order
    return SystemTruth({
        sid: math.fsum(ds.scores[list(idx)].tolist()) / len(idx)
        for sid, idx in ds.by_system.items()
    })


@dataclass(frozen=True)
class SynthConfig:
    n_systems: int = 175
    utterances_per_system: int = 28
    ratings_per_utterance: int = 8
    n_listeners: int = 288
    # ("uniform", low, high) or ("normal", mean, sd)
    system_quality: tuple[str, float, float] = ("uniform", 1.0, 5.0)
    listener_bias_sd: float = 0.3
    noise_sd: float = 0.5
    quantize: bool = True
    seed: int = 0
    fresh_listeners: bool = False

    def validate(self) -> None:
        for name in ("n_systems", "utterances_per_system", "ratings_per_utterance", "n_listeners"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.listener_bias_sd < 0 or self.noise_sd < 0:
            raise ValidationError("standard deviations must be non-negative")
        if self.system_quality[0] not in ("uniform", "normal"):
            raise ValidationError(f"unknown system_quality distribution {self.system_quality[0]!r}")
        if self.ratings_per_utterance > self.n_listeners:
            raise ValidationError(
                f"cannot give each utterance {self.ratings_per_utterance} distinct listeners "
                f"out of {self.n_listeners}"
            )
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")


def generate_synthetic(cfg: SynthConfig) -> tuple[Dataset, SystemTruth]:
    """Draw a rating dataset from an additive listener-bias model.

    score = quantize(m_sys + b_listener + noise). Each utterance is rated by
    ``ratings_per_utterance`` distinct listeners chosen uniformly at random.
    Returns the dataset and the latent per-system quality ``m``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    kind, p1, p2 = cfg.system_quality
    n_sys, n_utt_per = cfg.n_systems, cfg.utterances_per_system
    if kind == "uniform":
        quality = rng.uniform(p1, p2, size=n_sys)
    else:
        quality = rng.normal(p1, p2, size=n_sys)
    bias = rng.normal(0.0, cfg.listener_bias_sd, size=cfg.n_listeners)

    n_utt = n_sys * n_utt_per
    rpu = cfg.ratings_per_utterance
    # uniform choice of rpu distinct listeners per utterance
    keys = rng.random((n_utt, cfg.n_listeners))
    listeners = np.argpartition(keys, rpu - 1, axis=1)[:, :rpu] if rpu < cfg.n_listeners \
        else np.tile(np.arange(cfg.n_listeners), (n_utt, 1))
    listeners = np.sort(listeners, axis=1)
    utt_system = np.repeat(np.arange(n_sys), n_utt_per)

    noise = rng.normal(0.0, cfg.noise_sd, size=(n_utt, rpu))
    raw = quality[utt_system][:, None] + bias[listeners] + noise
    if cfg.quantize:
        raw = np.clip(np.round(raw), 1.0, 5.0)

    sw = len(str(n_sys))
    uw = len(str(n_utt_per))
    lw = len(str(cfg.n_listeners))
    lprefix = f"f{cfg.seed}_lis" if cfg.fresh_listeners else "lis"
    sys_ids = [f"sys{i + 1:0{sw}d}" for i in range(n_sys)]
    lis_ids = [f"{lprefix}{i + 1:0{lw}d}" for i in range(cfg.n_listeners)]
    ratings = []
    for u in range(n_utt):
        s = int(utt_system[u])
        utt_id = f"{sys_ids[s]}_utt{u % n_utt_per + 1:0{uw}d}"
        for c in range(rpu):
            ratings.append(Rating(sys_ids[s], utt_id, lis_ids[listeners[u, c]], float(raw[u, c])))
    latent = SystemTruth({sid: float(q) for sid, q in zip(sys_ids, quality)})
    return Dataset(ratings, Scale.MOS15), latent


def split_holdout(ds: Dataset, per_utterance: int, seed: int) -> tuple[Dataset, Dataset]:
    """Hold out ``per_utterance`` ratings of every utterance as a dev split.

    Utterances keep at least one rating on the training side, so a score
    table trained on the first split can predict every dev rating.
    """
    if per_utterance < 1:
        raise ValidationError("per_utterance must be positive")
    rng = np.random.default_rng(seed)
    dev = []
    for utt in ds.utterances:
        idx = np.array(ds.by_utterance[utt])
        if len(idx) <= per_utterance:
            raise ValidationError(f"utterance {utt!r} has only {len(idx)} ratings")
        dev.extend(rng.choice(idx, size=per_utterance, replace=False).tolist())
    dev_set = set(dev)
    train = [i for i in range(len(ds)) if i not in dev_set]
    return ds.subset(train), ds.subset(sorted(dev))


def scores_by_system(ds: Dataset, values: Mapping[int, float] | np.ndarray | None = None
                     ) -> dict[str, list[float]]:
    vals = ds.scores if values is None else np.asarray(values, dtype=np.float64)
    return {sid: vals[list(idx)].tolist() for sid, idx in ds.by_system.items()}
