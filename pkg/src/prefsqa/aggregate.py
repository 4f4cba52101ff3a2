"""Preferential aggregation: win/draw/loss tallies to per-system utilities."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError

UTILITY_HEADER = ("system_id", "utility", "method")


class AggMethod(str, enum.Enum):
    DC = "dc"
    WC = "wc"
    BTL = "btl"
    PS = "ps"
    MEAN = "mean"


@dataclass
class UtilityScores:
    """Per-system utilities produced by one aggregator.

    For BTL, ``scores`` holds log-utilities and ``q`` the normalised
    exponential utilities; ``converged``/``iterations`` report the fit.
    """

    scores: dict[str, float]
    method: AggMethod
    converged: bool = True
    iterations: int = 0
    q: dict[str, float] | None = None

    def __getitem__(self, system_id: str) -> float:
        return self.scores[system_id]

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def systems(self) -> list[str]:
        return list(self.scores)

    def ranking_values(self) -> dict[str, float]:
        return self.q if self.q is not None else self.scores

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(UTILITY_HEADER)
            for sid, u in self.scores.items():
                w.writerow((sid, repr(float(u)), self.method.value))


@dataclass(frozen=True)
class ComparisonTally:
    """Pairwise outcome counts.

    ``wins[i, j]`` counts comparisons system ``i`` won against ``j``;
    ``draws`` is symmetric with ``draws[i, j]`` the number of draws between them.
    """

    systems: tuple[str, ...]
    wins: np.ndarray
    draws: np.ndarray

    @property
    def n_systems(self) -> int:
        return len(self.systems)

    @property
    def W(self) -> np.ndarray:
        return self.wins.sum(axis=1)

    @property
    def L(self) -> np.ndarray:
        return self.wins.sum(axis=0)

    @property
    def D(self) -> np.ndarray:
        return self.draws.sum(axis=1)

    @property
    def n(self) -> np.ndarray:
        return self.wins + self.wins.T + self.draws

    def record(self, system_id: str) -> dict[str, int]:
        i = self.systems.index(system_id)
        return {"W": int(self.W[i]), "D": int(self.D[i]), "L": int(self.L[i])}


def tally_indices(n_systems: int, first: np.ndarray, second: np.ndarray, outcome: np.ndarray,
                  systems: Sequence[str] | None = None) -> ComparisonTally:
    """Vectorised tally of ``first`` vs ``second`` with outcomes in {-1, 0, 1}."""
    first = np.asarray(first, dtype=np.int64)
    second = np.asarray(second, dtype=np.int64)
    outcome = np.asarray(outcome)
    if np.any(first == second):
        raise ValidationError("a system cannot be compared with itself")
    nn = n_systems * n_systems
    winner = np.where(outcome > 0, first, second)
    loser = np.where(outcome > 0, second, first)
    dec = outcome != 0
    wins = np.bincount(winner[dec] * n_systems + loser[dec], minlength=nn).reshape(n_systems, n_systems)
    d = np.bincount(first[~dec] * n_systems + second[~dec], minlength=nn).reshape(n_systems, n_systems)
    if systems is None:
        systems = [str(i) for i in range(n_systems)]
    return ComparisonTally(tuple(systems), wins, d + d.T)


def tally(outcomes: Iterable[tuple[str, str, int]], systems: Sequence[str] | None = None) -> ComparisonTally:
    """Count (system_a, system_b, outcome-of-a) records.

    ``systems`` may declare systems that never appear; otherwise the system
    set is the sorted set of ids in the records.
    """
    recs = list(outcomes)
    if systems is None:
        systems = sorted({r[0] for r in recs} | {r[1] for r in recs})
    lookup = {s: i for i, s in enumerate(systems)}
    for a, b, _ in recs:
        if a == b:
            raise ValidationError(f"self-comparison record for system {a!r}")
        for s in (a, b):
            if s not in lookup:
                raise ValidationError(f"system {s!r} not declared")
    first = np.array([lookup[r[0]] for r in recs], dtype=np.int64)
    second = np.array([lookup[r[1]] for r in recs], dtype=np.int64)
    out = np.array([int(r[2]) for r in recs], dtype=np.int64)
    return tally_indices(len(systems), first, second, out, systems)


def agg_dc(t: ComparisonTally) -> UtilityScores:
    """Wins minus losses."""
    u = t.W - t.L
    return UtilityScores({s: float(v) for s, v in zip(t.systems, u)}, AggMethod.DC)


def agg_wc(t: ComparisonTally) -> UtilityScores:
    """Wins only."""
    return UtilityScores({s: float(v) for s, v in zip(t.systems, t.W)}, AggMethod.WC)


@dataclass(frozen=True)
class BtlConfig:
    max_iter: int = 200
    tol: float = 1e-4
    prior: float = 0.01

    def __post_init__(self):
        if self.max_iter < 1 or not self.tol > 0 or self.prior < 0:
            raise ValidationError(f"invalid BTL configuration {self}")


def _check_identifiable(t: ComparisonTally, w: np.ndarray) -> None:
    # The MLE exists iff the "beat-or-drew" digraph is strongly connected.
    n_comp, labels = connected_components(csr_matrix(w > 0), directed=True, connection="strong")
    if n_comp == 1:
        return
    no_win = np.flatnonzero(w.sum(axis=1) == 0)
    if len(no_win):
        raise ValidationError(
            f"BTL without prior: system {t.systems[no_win[0]]!r} has no wins or draws")
    comp = [t.systems[i] for i in np.flatnonzero(labels == labels[0])]
    raise ValidationError(
        f"BTL without prior: comparison graph is not strongly connected "
        f"({n_comp} components; one is {comp[:5]}{'...' if len(comp) > 5 else ''})")


def btl_weights(t: ComparisonTally, prior: float) -> np.ndarray:
    """Effective wins: decisive wins plus half of each draw plus ``prior``."""
    w = t.wins + 0.5 * t.draws
    if prior:
        w = w + prior
        np.fill_diagonal(w, 0.0)
    return w.astype(np.float64)


def fit_btl(w: np.ndarray, max_iter: int = 200, tol: float = 1e-4) -> tuple[np.ndarray, bool, int]:
    """Minorization-maximization for BTL strengths from an effective-win matrix.

    Starts from the uniform vector, renormalises to the simplex every step
    and stops once the max absolute change falls below ``tol``.
    """
    n = w.shape[0]
    q = np.full(n, 1.0 / n)
    wins = w.sum(axis=1)
    games = w + w.T
    for it in range(1, max_iter + 1):
        denom = (games / (q[:, None] + q[None, :])).sum(axis=1)
        q_new = wins / denom
        q_new /= q_new.sum()
        delta = np.max(np.abs(q_new - q))
        q = q_new
        if delta < tol:
            return q, True, it
    return q, False, max_iter


def agg_btl(t: ComparisonTally, cfg: BtlConfig = BtlConfig()) -> UtilityScores:
    """Bradley-Terry-Luce utilities, reported as ln q with sum(q) = 1."""
    if t.n_systems == 1:
        return UtilityScores({t.systems[0]: 0.0}, AggMethod.BTL, True, 0, {t.systems[0]: 1.0})
    w = btl_weights(t, cfg.prior)
    if cfg.prior == 0:
        _check_identifiable(t, w)
    q, converged, iters = fit_btl(w, cfg.max_iter, cfg.tol)
    with np.errstate(divide="ignore"):
        u = np.log(q)
    return UtilityScores({s: float(v) for s, v in zip(t.systems, u)}, AggMethod.BTL,
                         converged, iters, {s: float(v) for s, v in zip(t.systems, q)})


def agg_ps_indices(n_systems: int, first: np.ndarray, second: np.ndarray, pref: np.ndarray,
                   systems: Sequence[str]) -> UtilityScores:
    pref = np.asarray(pref, dtype=np.float64)
    u = (np.bincount(first, weights=pref, minlength=n_systems)
         - np.bincount(second, weights=pref, minlength=n_systems))
    return UtilityScores({s: float(v) for s, v in zip(systems, u)}, AggMethod.PS)


def agg_ps(raw: Iterable[tuple[str, str, float]], systems: Sequence[str] | None = None) -> UtilityScores:
    """Sum of raw preferences where a system is first minus the sum where it is second."""
    recs = list(raw)
    for _, _, p in recs:
        if not (math.isfinite(p) and -1.0 <= p <= 1.0):
            raise ValidationError(f"preference {p!r} outside [-1, 1]")
    if systems is None:
        systems = sorted({r[0] for r in recs} | {r[1] for r in recs})
    lookup = {s: i for i, s in enumerate(systems)}
    first = np.array([lookup[r[0]] for r in recs], dtype=np.int64)
    second = np.array([lookup[r[1]] for r in recs], dtype=np.int64)
    return agg_ps_indices(len(systems), first, second, np.array([r[2] for r in recs]), systems)


def agg_mean(ds_scores: Mapping[str, Sequence[float]]) -> UtilityScores:
    """Arithmetic mean of each system's direct scores."""
    out = {}
    for sid, vals in ds_scores.items():
        if len(vals) == 0:
            raise ValidationError(f"system {sid!r} has no scores")
        out[sid] = math.fsum(vals) / len(vals)
    return UtilityScores(out, AggMethod.MEAN)


def aggregate_tally(t: ComparisonTally, method: AggMethod | str, btl: BtlConfig = BtlConfig()) -> UtilityScores:
    method = AggMethod(method)
    if method is AggMethod.DC:
        return agg_dc(t)
    if method is AggMethod.WC:
        return agg_wc(t)
    if method is AggMethod.BTL:
        return agg_btl(t, btl)
    raise ValidationError(f"{method.value} does not aggregate win/draw/loss tallies")
