"""Monte-Carlo ranking-bound simulation and model evaluation sweeps.

Each (k, run) pair owns a generator seeded from ``(base_seed, k, run)`` via
:class:`numpy.random.SeedSequence`, so results do not depend on the order
or the number of workers that execute the runs.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .aggregate import AggMethod, BtlConfig, agg_mean, agg_ps_indices, aggregate_tally, tally_indices
from .dataset import Dataset, SystemTruth
from .errors import PrefSQAError, ValidationError
from .metrics import srcc
from .pairgen import PairMethod, generate_plan, realize_indices, validate_k
from .preference import ThresholdMethod, Thresholds, alpha

RESULTS_HEADER = ("method", "aggregator", "same_listener", "k", "run", "srcc", "fallbacks", "status")
EVAL_HEADER = ("method", "threshold", "aggregator", "same_listener", "k", "run", "srcc", "fallbacks", "status")
SUMMARY_HEADER = ("method", "aggregator", "same_listener", "k", "mean_srcc", "sd_srcc", "n_ok")


@dataclass(frozen=True)
class SimConfig:
    method: PairMethod
    k_values: tuple[int, ...]
    same_listener: bool = False
    aggregator: AggMethod = AggMethod.DC
    n_runs: int = 100
    base_seed: int = 0
    strict: bool = False
    btl: BtlConfig = field(default_factory=BtlConfig)

    def __post_init__(self):
        object.__setattr__(self, "method", PairMethod(self.method))
        object.__setattr__(self, "aggregator", AggMethod(self.aggregator))
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        if self.aggregator not in (AggMethod.DC, AggMethod.WC, AggMethod.BTL):
            raise ValidationError("the bound simulation aggregates tallies with dc, wc or btl")
        if self.n_runs < 1:
            raise ValidationError("n_runs must be at least 1")
        if not self.k_values:
            raise ValidationError("k_values is empty")


@dataclass(frozen=True)
class SimRow:
    method: str
    aggregator: str
    same_listener: bool
    k: int
    run: int
    srcc: float
    fallbacks: int
    status: str = "ok"
    threshold: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class SummaryRow:
    method: str
    aggregator: str
    same_listener: bool
    k: int
    mean_srcc: float
    sd_srcc: float
    n_ok: int


@dataclass
class SimResult:
    rows: list[SimRow]

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (r.k, r.run))

    @property
    def n_errors(self) -> int:
        return sum(not r.ok for r in self.rows)

    def srcc_values(self, k: int | None = None) -> list[float]:
        return [r.srcc for r in self.rows if r.ok and (k is None or r.k == k)]

    def summary(self) -> list[SummaryRow]:
        out = []
        for k in sorted({r.k for r in self.rows}):
            rows = [r for r in self.rows if r.k == k]
            vals = [r.srcc for r in rows if r.ok]
            n = len(vals)
            mean = math.fsum(vals) / n if n else math.nan
            sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else (0.0 if n else math.nan)
            first = rows[0]
            out.append(SummaryRow(first.method, first.aggregator, first.same_listener, k, mean, sd, n))
        return out

    def mean(self, k: int) -> float:
        return next(s.mean_srcc for s in self.summary() if s.k == k)

    def to_csv(self, path: str | Path) -> None:
        with_threshold = any(r.threshold for r in self.rows)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVAL_HEADER if with_threshold else RESULTS_HEADER)
            for r in self.rows:
                row = [r.method, r.aggregator, int(r.same_listener), r.k, r.run,
                       _fmt(r.srcc), r.fallbacks, r.status]
                if with_threshold:
                    row.insert(1, r.threshold)
                w.writerow(row)

    def summary_to_csv(self, path: str | Path) -> None:
        write_summary_csv(self.summary(), path)


def write_summary_csv(rows: Sequence[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in rows:
            w.writerow((s.method, s.aggregator, int(s.same_listener), s.k,
                        _fmt(s.mean_srcc), _fmt(s.sd_srcc), s.n_ok))


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def load_results_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"k", "run", "srcc", "status"} <= set(rows[0]):
        raise ValidationError(f"{path}: not a results file")
    return rows


def run_seed(base_seed: int, k: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(k, run))


# outcome function: (first rating idx, second rating idx) -> outcomes or raw preferences
OutcomeFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _truth_only(util, truth: SystemTruth):
    vals = util.ranking_values()
    return {s: vals[s] for s in truth.scores}


def _one_run(ds: Dataset, truth: SystemTruth, method: PairMethod, k: int, same_listener: bool,
             strict: bool, aggregator: AggMethod, btl: BtlConfig, seed: np.random.SeedSequence,
             outcome_fn: OutcomeFn) -> tuple[float, int]:
    rng = np.random.default_rng(seed)
    n = len(ds.systems)
    plan = generate_plan(method, n, k, rng)
    first, second, _, fallbacks = realize_indices(plan, ds, same_listener, strict, rng)
    sa, sb = ds.system_index[first], ds.system_index[second]
    values = outcome_fn(first, second)
    if aggregator is AggMethod.PS:
        util = agg_ps_indices(n, sa, sb, values, ds.systems)
    else:
        util = aggregate_tally(tally_indices(n, sa, sb, values, ds.systems), aggregator, btl)
    return srcc(_truth_only(util, truth), truth), fallbacks


def _check_systems(ds: Dataset, truth: SystemTruth) -> None:
    missing = set(truth.scores) - set(ds.systems)
    if missing:
        raise ValidationError(f"truth systems missing from dataset: {sorted(missing)[:5]}")


# Process-pool workers read the shared inputs from this module-level slot.
_WORKER: dict = {}


def _init_worker(payload: dict) -> None:
    _WORKER.clear()
    _WORKER.update(payload)


def _task(task: tuple) -> SimRow:
    return _execute(_WORKER, task)


def _execute(ctx: dict, task: tuple) -> SimRow:
    k, run = task
    meta = ctx["meta"]
    try:
        value, fallbacks = _one_run(ctx["ds"], ctx["truth"], meta["method"], k, meta["same_listener"],
                                    meta["strict"], meta["aggregator"], meta["btl"],
                                    run_seed(meta["base_seed"], k, run), ctx["outcome_fn"])
        status = "ok"
    except PrefSQAError as exc:
        value, fallbacks, status = math.nan, 0, f"error: {exc}"
    return SimRow(meta["method"].value, meta["aggregator"].value, meta["same_listener"], k, run,
                  value, fallbacks, status, meta.get("threshold", ""))


def _run_all(ctx: dict, tasks: list[tuple[int, int]], jobs: int) -> SimResult:
    if jobs <= 1 or len(tasks) <= 1:
        return SimResult([_execute(ctx, t) for t in tasks])
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
        return SimResult(list(pool.map(_task, tasks, chunksize=chunk)))


class _GroundTruthOutcome:
    """Sign of the rating difference (picklable for worker processes)."""

    def __init__(self, scores: np.ndarray):
        self.scores = scores

    def __call__(self, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        return np.sign(self.scores[first] - self.scores[second]).astype(np.int64)


class _PredictedOutcome:
    def __init__(self, pred: np.ndarray, thresholds: Thresholds | None):
        self.pred = pred
        self.thresholds = thresholds

    def __call__(self, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        p = alpha(self.pred[first] - self.pred[second])
        return p if self.thresholds is None else self.thresholds.classify(p)


def run_bound_simulation(ds: Dataset, truth: SystemTruth, cfg: SimConfig, jobs: int = 1) -> SimResult:
    """SRCC of tally-aggregated ground-truth preferences against ``truth``.

    Every run draws a fresh plan, realizes it on ``ds`` and scores each
    comparison by the sign of the two ratings' difference.
    """
    _check_systems(ds, truth)
    for k in cfg.k_values:
        validate_k(cfg.method, len(ds.systems), k)
    ctx = {
        "ds": ds, "truth": truth, "outcome_fn": _GroundTruthOutcome(ds.scores),
        "meta": {"method": cfg.method, "same_listener": cfg.same_listener, "strict": cfg.strict,
                 "aggregator": cfg.aggregator, "btl": cfg.btl, "base_seed": cfg.base_seed},
    }
    tasks = [(k, r) for k in cfg.k_values for r in range(cfg.n_runs)]
    return _run_all(ctx, tasks, jobs)


def predictions_for(ds: Dataset, utterance_scores: Mapping[tuple[str, str], float]) -> np.ndarray:
    """Predicted score of every rating of ``ds``, keyed by (utterance, listener)."""
    out = np.empty(len(ds))
    for i, r in enumerate(ds):
        try:
            out[i] = utterance_scores[(r.utterance_id, r.listener_id)]
        except KeyError:
            raise ValidationError(
                f"no predicted score for utterance {r.utterance_id!r} / listener {r.listener_id!r}") from None
    return out


def run_model_eval(utterance_scores: Mapping[tuple[str, str], float] | np.ndarray, ds: Dataset,
                   truth: SystemTruth, method: PairMethod | str, k: int,
                   threshold: ThresholdMethod | str | None, aggregator: AggMethod | str,
                   n_repeats: int = 20, seed: int = 0, thresholds: Thresholds | None = None,
                   same_listener: bool = False, strict: bool = False,
                   btl: BtlConfig = BtlConfig(), jobs: int = 1) -> SimResult:
    """Evaluate predicted utterance scores by regenerating test pairs every repeat.

    Outcomes are ``alpha(pred_a - pred_b)`` classified by ``thresholds``
    (ER/ND are built in; EER needs fitted ``thresholds``), or the raw
    preference for PS. MEAN averages predictions per system and ignores
    the pair machinery.
    """
    method = PairMethod(method)
    aggregator = AggMethod(aggregator)
    _check_systems(ds, truth)
    if n_repeats < 1:
        raise ValidationError("n_repeats must be at least 1")
    pred = (np.asarray(utterance_scores, dtype=np.float64) if isinstance(utterance_scores, np.ndarray)
            else predictions_for(ds, utterance_scores))
    if pred.shape != (len(ds),):
        raise ValidationError("need one prediction per rating")
    tname = ""
    if aggregator is AggMethod.PS:
        if threshold is not None:
            raise ValidationError("PS aggregates raw preferences and takes no threshold")
        th = None
    elif aggregator is AggMethod.MEAN:
        th = None
    else:
        if threshold is None:
            raise ValidationError(f"{aggregator.value} needs a threshold method")
        threshold = ThresholdMethod(threshold)
        tname = threshold.value
        if threshold is ThresholdMethod.EER:
            if thresholds is None:
                raise ValidationError("EER needs thresholds fitted on a development set")
            th = thresholds
        else:
            from .preference import thresholds_for
            th = thresholds_for(threshold)

    if aggregator is AggMethod.MEAN:
        from .dataset import scores_by_system
        try:
            value = srcc(_truth_only(agg_mean(scores_by_system(ds, pred)), truth), truth)
            status = "ok"
        except PrefSQAError as exc:
            value, status = math.nan, f"error: {exc}"
        return SimResult([SimRow("none", aggregator.value, False, 0, r, value, 0, status, "")
                          for r in range(n_repeats)])

    validate_k(method, len(ds.systems), k)
    ctx = {
        "ds": ds, "truth": truth, "outcome_fn": _PredictedOutcome(pred, th),
        "meta": {"method": method, "same_listener": same_listener, "strict": strict,
                 "aggregator": aggregator, "btl": btl, "base_seed": seed, "threshold": tname},
    }
    return _run_all(ctx, [(k, r) for r in range(n_repeats)], jobs)


def dev_preferences(pred: np.ndarray, ds: Dataset, n_pairs: int, seed: int,
                    same_listener: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Predicted preferences and ground-truth outcomes on random dev pairs,
    the input to EER threshold fitting.

    Same-listener pairs by default, the way preference targets are built in
    training; otherwise uniform rating pairs from distinct systems.
    """
    from .pairgen import sample_training_pairs
    rng = np.random.default_rng(seed)
    if same_listener:
        first, second = sample_training_pairs(ds, n_pairs, rng)
    else:
        first = rng.integers(0, len(ds), size=n_pairs)
        second = rng.integers(0, len(ds) - 1, size=n_pairs)
        second = second + (second >= first)
    p = alpha(pred[first] - pred[second])
    gt = np.sign(ds.scores[first] - ds.scores[second]).astype(np.int64)
    return p, gt
