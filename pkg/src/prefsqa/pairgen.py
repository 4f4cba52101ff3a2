"""System-pair plans (RAND, LINK, BS) and their realization into rating pairs."""
from __future__ import annotations

import csv
import enum
import weakref
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .dataset import Dataset, Rating, _format_score
from .errors import ValidationError

PLAN_HEADER = ("system_a", "system_b", "count")
PAIRS_HEADER = ("sys_a", "utt_a", "lis_a", "score_a", "sys_b", "utt_b", "lis_b", "score_b")


class PairMethod(str, enum.Enum):
    RAND = "rand"
    LINK = "link"
    BS = "bs"


@dataclass(frozen=True)
class PairPlan:
    """Multiset of unordered system pairs over systems ``0..n_systems-1``.

    ``pairs`` holds distinct canonical pairs (a < b) in lexicographic order
    and ``counts`` their multiplicities.
    """

    n_systems: int
    pairs: np.ndarray
    counts: np.ndarray
    method: PairMethod

    @classmethod
    def from_pairs(cls, n_systems: int, a: np.ndarray, b: np.ndarray, method: PairMethod) -> "PairPlan":
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        if np.any(lo == hi):
            raise ValidationError("self-pairs are not allowed")
        keys, counts = np.unique(lo * n_systems + hi, return_counts=True)
        pairs = np.stack([keys // n_systems, keys % n_systems], axis=1)
        return cls(n_systems, pairs, counts, method)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def count_map(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): int(c) for (a, b), c in zip(self.pairs, self.counts)}

    def incidence(self) -> np.ndarray:
        """Number of comparisons each system takes part in."""
        return (np.bincount(self.pairs[:, 0], weights=self.counts, minlength=self.n_systems)
                + np.bincount(self.pairs[:, 1], weights=self.counts, minlength=self.n_systems)
                ).astype(np.int64)

    def expand(self) -> tuple[np.ndarray, np.ndarray]:
        """One (a, b) entry per comparison instance, in plan order."""
        return np.repeat(self.pairs[:, 0], self.counts), np.repeat(self.pairs[:, 1], self.counts)

    def to_csv(self, path: str | Path, systems: Sequence[str] | None = None) -> None:
        name = (lambda i: systems[i]) if systems is not None else (lambda i: str(i))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLAN_HEADER)
            for (a, b), c in zip(self.pairs.tolist(), self.counts.tolist()):
                w.writerow((name(a), name(b), c))


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def gen_rand(n_systems: int, k: int, rng) -> PairPlan:
    """``k`` independent uniform draws over all unordered system pairs."""
    if n_systems < 2:
        raise ValidationError("RAND needs at least 2 systems")
    if k < 1:
        raise ValidationError("k must be positive")
    a, b = np.triu_indices(n_systems, k=1)
    draw = _rng(rng).integers(0, len(a), size=k)
    return PairPlan.from_pairs(n_systems, a[draw], b[draw], PairMethod.RAND)


def gen_link(n_systems: int, k: int, rng) -> PairPlan:
    """``k / n_systems`` rounds of a freshly shuffled ring of all systems."""
    if n_systems < 3:
        raise ValidationError("LINK needs at least 3 systems")
    if k < 1 or k % n_systems:
        raise ValidationError(f"LINK needs k to be a positive multiple of the system count {n_systems}, got {k}")
    rng = _rng(rng)
    rounds = k // n_systems
    perms = np.empty((rounds, n_systems), dtype=np.int64)
    for r in range(rounds):
        perms[r] = rng.permutation(n_systems)
    nxt = np.roll(perms, -1, axis=1)
    return PairPlan.from_pairs(n_systems, perms.ravel(), nxt.ravel(), PairMethod.LINK)


def gen_bs(n_systems: int, k: int) -> PairPlan:
    """Every unordered pair, ``k / C(N, 2)`` times each."""
    if n_systems < 2:
        raise ValidationError("BS needs at least 2 systems")
    m = comb(n_systems, 2)
    if k < 1 or k % m:
        raise ValidationError(f"BS needs k to be a positive multiple of C({n_systems},2) = {m}, got {k}")
    a, b = np.triu_indices(n_systems, k=1)
    return PairPlan(n_systems, np.stack([a, b], axis=1).astype(np.int64),
                    np.full(m, k // m, dtype=np.int64), PairMethod.BS)


def validate_k(method: PairMethod | str, n_systems: int, k: int) -> None:
    method = PairMethod(method)
    if k < 1:
        raise ValidationError("k must be positive")
    if method is PairMethod.LINK:
        if n_systems < 3:
            raise ValidationError("LINK needs at least 3 systems")
        if k % n_systems:
            raise ValidationError(f"LINK needs k to be a multiple of the system count {n_systems}, got {k}")
    elif method is PairMethod.BS:
        m = comb(n_systems, 2)
        if m == 0 or k % m:
            raise ValidationError(f"BS needs k to be a multiple of C({n_systems},2) = {m}, got {k}")
    elif n_systems < 2:
        raise ValidationError("RAND needs at least 2 systems")


def generate_plan(method: PairMethod | str, n_systems: int, k: int, rng=None) -> PairPlan:
    method = PairMethod(method)
    if method is PairMethod.RAND:
        return gen_rand(n_systems, k, rng)
    if method is PairMethod.LINK:
        return gen_link(n_systems, k, rng)
    return gen_bs(n_systems, k)


@dataclass(frozen=True)
class RatingPair:
    first: Rating
    second: Rating
    same_listener: bool


class _SamplingIndex:
    """CSR lookups over a dataset: ratings by system, by (system, listener),
    by listener, and the common listeners of each system pair."""

    def __init__(self, ds: Dataset):
        n_sys, n_lis = len(ds.systems), len(ds.listeners)
        self.n_sys, self.n_lis = n_sys, n_lis
        sys_idx, lis_idx = ds.system_index, ds.listener_index

        self.sys_order, self.sys_start, self.sys_count = _csr(sys_idx, n_sys)
        self.cell_order, self.cell_start, self.cell_count = _csr(sys_idx * n_lis + lis_idx, n_sys * n_lis)
        self.lis_order, self.lis_start, self.lis_count = _csr(lis_idx, n_lis)

        present = self.cell_count.reshape(n_sys, n_lis) > 0
        starts = np.zeros(n_sys * n_sys, dtype=np.int64)
        lengths = np.zeros(n_sys * n_sys, dtype=np.int64)
        chunks = []
        offset = 0
        for a in range(n_sys - 1):
            common = present[a] & present[a + 1:]
            rows, cols = np.nonzero(common)
            per_pair = np.bincount(rows, minlength=n_sys - a - 1)
            pid = a * n_sys + np.arange(a + 1, n_sys)
            lengths[pid] = per_pair
            starts[pid] = offset + np.concatenate([[0], np.cumsum(per_pair)[:-1]])
            chunks.append(cols)
            offset += len(cols)
        self.common = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
        self.common_start = starts
        self.common_len = lengths


def _csr(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    count = np.bincount(keys, minlength=n)
    start = np.concatenate([[0], np.cumsum(count)[:-1]])
    return order, start, count


_INDEX_CACHE: "weakref.WeakKeyDictionary[Dataset, _SamplingIndex]" = weakref.WeakKeyDictionary()


def sampling_index(ds: Dataset) -> _SamplingIndex:
    idx = _INDEX_CACHE.get(ds)
    if idx is None:
        idx = _INDEX_CACHE[ds] = _SamplingIndex(ds)
    return idx


def _pick(order: np.ndarray, start: np.ndarray, count: np.ndarray, key: np.ndarray, u: np.ndarray) -> np.ndarray:
    # uniform member of each CSR row; count must be > 0
    return order[start[key] + np.minimum((u * count[key]).astype(np.int64), count[key] - 1)]


@dataclass(frozen=True)
class Realization:
    """Realized comparison instances as rating indices into ``ds``.

    ``first[i]``/``second[i]`` are the rating indices of instance ``i``;
    ``constrained[i]`` tells whether it was drawn under the same-listener
    rule. ``fallbacks`` counts instances that had to be drawn without it.
    """

    ds: Dataset
    first: np.ndarray
    second: np.ndarray
    constrained: np.ndarray
    fallbacks: int

    def __len__(self) -> int:
        return len(self.first)

    def __iter__(self) -> Iterator[RatingPair]:
        r = self.ds.ratings
        for i, j, c in zip(self.first.tolist(), self.second.tolist(), self.constrained.tolist()):
            yield RatingPair(r[i], r[j], bool(c))

    @property
    def pairs(self) -> list[RatingPair]:
        return list(self)

    def to_csv(self, path: str | Path) -> None:
        ds = self.ds
        integral = bool(np.all(ds.scores == np.round(ds.scores)))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PAIRS_HEADER)
            for p in self:
                row = []
                for r in (p.first, p.second):
                    row += [r.system_id, r.utterance_id, r.listener_id,
                            _format_score(r.score, ds.scale, integral)]
                w.writerow(row)


def realize_indices(plan: PairPlan, ds: Dataset, same_listener: bool, strict: bool, rng
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Vectorised core of :func:`realize_plan`."""
    index = sampling_index(ds)
    if plan.n_systems != index.n_sys:
        raise ValidationError(f"plan covers {plan.n_systems} systems, dataset has {index.n_sys}")
    rng = _rng(rng)
    a, b = plan.expand()
    n = len(a)
    flip = rng.random(n) < 0.5
    u_lis = rng.random(n)
    u_a = rng.random(n)
    u_b = rng.random(n)

    constrained = np.zeros(n, dtype=bool)
    fallbacks = 0
    first = np.empty(n, dtype=np.int64)
    second = np.empty(n, dtype=np.int64)
    if same_listener:
        pid = a * index.n_sys + b
        n_common = index.common_len[pid]
        constrained = n_common > 0
        if not constrained.all():
            bad = int(np.flatnonzero(~constrained)[0])
            if strict:
                raise ValidationError(
                    f"systems {ds.systems[a[bad]]!r} and {ds.systems[b[bad]]!r} have no common listener")
            fallbacks = int((~constrained).sum())
        c = np.flatnonzero(constrained)
        slot = index.common_start[pid[c]] + np.minimum(
            (u_lis[c] * n_common[c]).astype(np.int64), n_common[c] - 1)
        lis = index.common[slot]
        first[c] = _pick(index.cell_order, index.cell_start, index.cell_count, a[c] * index.n_lis + lis, u_a[c])
        second[c] = _pick(index.cell_order, index.cell_start, index.cell_count, b[c] * index.n_lis + lis, u_b[c])
    free = np.flatnonzero(~constrained)
    first[free] = _pick(index.sys_order, index.sys_start, index.sys_count, a[free], u_a[free])
    second[free] = _pick(index.sys_order, index.sys_start, index.sys_count, b[free], u_b[free])

    first, second = np.where(flip, second, first), np.where(flip, first, second)
    return first, second, constrained, fallbacks


def realize_plan(plan: PairPlan, ds: Dataset, same_listener: bool = False, strict: bool = False,
                 rng=None) -> Realization:
    """Draw one concrete rating pair for every comparison in ``plan``.

    Without the constraint each side is a uniform rating of its system. With
    it, a listener is drawn uniformly among those who rated both systems and
    each side is a uniform rating by that listener. Pairs with no common
    listener raise when ``strict``; otherwise they are drawn unconstrained
    and counted in ``fallbacks``.
    """
    first, second, constrained, fallbacks = realize_indices(plan, ds, same_listener, strict, rng)
    return Realization(ds, first, second, constrained, fallbacks)


def sample_training_pairs(ds: Dataset, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """``n`` same-listener rating pairs as index arrays.

    The listener is uniform over listeners with at least two ratings; the
    two ratings are distinct and uniform. They may come from one system.
    """
    index = sampling_index(ds)
    eligible = np.flatnonzero(index.lis_count >= 2)
    if len(eligible) == 0:
        raise ValidationError("no listener has rated at least two utterances")
    rng = _rng(rng)
    lis = eligible[rng.integers(0, len(eligible), size=n)]
    cnt = index.lis_count[lis]
    i = rng.integers(0, cnt)
    j = rng.integers(0, cnt - 1)
    j = j + (j >= i)
    base = index.lis_start[lis]
    return index.lis_order[base + i], index.lis_order[base + j]


def sample_training_pair(ds: Dataset, rng) -> RatingPair:
    i, j = sample_training_pairs(ds, 1, rng)
    return RatingPair(ds[int(i[0])], ds[int(j[0])], True)
