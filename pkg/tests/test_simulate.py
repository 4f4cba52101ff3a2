import csv
import math

import numpy as np
import pytest

from prefsqa.aggregate import AggMethod
from prefsqa.dataset import normalize, system_truth
from prefsqa.errors import ValidationError
from prefsqa.pairgen import PairMethod
from prefsqa.preference import Thresholds
from prefsqa.report import write_chart
from conftest import make_ds
from prefsqa.simulate import (RESULTS_HEADER, SimConfig, SimResult, SimRow, dev_preferences, load_results_csv,
                              run_bound_simulation, run_model_eval)


def test_config_rejects_ps_and_mean():
    for agg in ("ps", "mean"):
        with pytest.raises(ValidationError):
            SimConfig("link", (10,), aggregator=agg)


def test_noise_free_bs_is_exact(noiseless_synth):
    ds, truth = noiseless_synth
    n = len(ds.systems)
    for agg in ("dc", "wc", "btl"):
        res = run_bound_simulation(ds, truth, SimConfig("bs", (math.comb(n, 2),), aggregator=agg, n_runs=5))
        assert res.srcc_values() == [1.0] * 5


def test_determinism_across_jobs(small_synth):
    ds, truth = small_synth
    cfg = SimConfig("link", (12, 48), aggregator="btl", n_runs=6, base_seed=3, same_listener=True)
    a = run_bound_simulation(ds, truth, cfg, jobs=1)
    b = run_bound_simulation(ds, truth, cfg, jobs=3)
    assert a.rows == b.rows
    c = run_bound_simulation(ds, truth, SimConfig("link", (48,), aggregator="btl", n_runs=6, base_seed=3,
                                                  same_listener=True))
    # a run's outcome does not depend on which other k values were requested
    assert c.rows == [r for r in a.rows if r.k == 48]


def test_seed_changes_results(small_synth):
    ds, truth = small_synth
    a = run_bound_simulation(ds, truth, SimConfig("rand", (30,), n_runs=5, base_seed=0))
    b = run_bound_simulation(ds, truth, SimConfig("rand", (30,), n_runs=5, base_seed=1))
    assert a.srcc_values() != b.srcc_values()


def test_summary_recomputable(small_synth, tmp_path):
    ds, truth = small_synth
    res = run_bound_simulation(ds, truth, SimConfig("rand", (20, 60), n_runs=7))
    res.to_csv(tmp_path / "r.csv")
    res.summary_to_csv(tmp_path / "s.csv")
    rows = load_results_csv(tmp_path / "r.csv")
    assert list(rows[0]) == list(RESULTS_HEADER)
    with open(tmp_path / "s.csv", newline="") as fh:
        summary = list(csv.DictReader(fh))
    for s in summary:
        vals = [float(r["srcc"]) for r in rows if r["k"] == s["k"] and r["status"] == "ok"]
        assert float(s["mean_srcc"]) == pytest.approx(np.mean(vals), abs=1e-12)
        assert float(s["sd_srcc"]) == pytest.approx(np.std(vals, ddof=1), abs=1e-12)
        assert int(s["n_ok"]) == len(vals)


def test_invalid_k_rejected_upfront(small_synth):
    ds, truth = small_synth
    with pytest.raises(ValidationError):
        run_bound_simulation(ds, truth, SimConfig("link", (13,), n_runs=1))


def test_failed_runs_are_recorded():
    # C shares no listener with A or B, so strict same-listener pairing fails
    ds = make_ds([("A", "a1", "L", 4), ("A", "a2", "M", 2), ("B", "b1", "L", 3), ("B", "b2", "M", 5),
                  ("C", "c1", "N", 1), ("C", "c2", "N", 2)])
    truth = system_truth(ds)
    res = run_bound_simulation(ds, truth, SimConfig("bs", (3,), same_listener=True, strict=True, n_runs=4))
    assert res.n_errors == 4
    assert all(r.status.startswith("error:") and math.isnan(r.srcc) for r in res.rows)
    assert res.summary()[0].n_ok == 0
    lenient = run_bound_simulation(ds, truth, SimConfig("bs", (3,), same_listener=True, n_runs=4))
    assert lenient.n_errors == 0 and all(r.fallbacks == 2 for r in lenient.rows)


def test_error_rows_excluded_from_summary():
    rows = [SimRow("link", "dc", False, 10, 0, 0.5, 0), SimRow("link", "dc", False, 10, 1, math.nan, 0, "error: x"),
            SimRow("link", "dc", False, 10, 2, 0.7, 0)]
    s = SimResult(rows).summary()[0]
    assert s.n_ok == 2 and s.mean_srcc == pytest.approx(0.6)
    assert SimResult(rows).n_errors == 1


def test_ground_truth_eval_reproduces_bound(small_synth):
    ds, truth = small_synth
    res = run_bound_simulation(ds, truth, SimConfig("rand", (80,), n_runs=6, base_seed=5))
    ev = run_model_eval(ds.scores.copy(), ds, truth, "rand", 80, "nd", "dc", n_repeats=6, seed=5)
    assert ev.srcc_values() == res.srcc_values()


def test_eval_ps_rejects_threshold(small_synth):
    ds, truth = small_synth
    with pytest.raises(ValidationError):
        run_model_eval(ds.scores.copy(), ds, truth, "bs", 66, "er", "ps")


def test_eval_eer_needs_thresholds(small_synth):
    ds, truth = small_synth
    with pytest.raises(ValidationError):
        run_model_eval(ds.scores.copy(), ds, truth, "bs", 66, "eer", "dc")
    ev = run_model_eval(ds.scores.copy(), ds, truth, "bs", 66, "eer", "dc", n_repeats=2,
                        thresholds=Thresholds(-0.1, 0.1))
    assert all(r.threshold == "eer" for r in ev.rows)


def test_eval_constant_model_errors_per_repeat(small_synth):
    ds, truth = small_synth
    ev = run_model_eval(np.zeros(len(ds)), ds, truth, "bs", 66, "er", "dc", n_repeats=3)
    assert ev.n_errors == 3
    assert all("constant" in r.status for r in ev.rows)


def test_eval_mean_and_ps(small_synth):
    ds, truth = small_synth
    pred = ds.scores.copy()
    mean = run_model_eval(pred, ds, truth, "bs", 66, None, "mean", n_repeats=3)
    assert len({r.srcc for r in mean.rows}) == 1
    assert mean.rows[0].srcc == pytest.approx(
        __import__("prefsqa").metrics.srcc(system_truth(ds), truth))
    ps = run_model_eval(pred, ds, truth, "bs", 66, None, "ps", n_repeats=3)
    assert all(r.ok for r in ps.rows)


def test_eval_mapping_predictions(small_synth):
    ds, truth = small_synth
    mapping = {(r.utterance_id, r.listener_id): r.score for r in ds}
    a = run_model_eval(mapping, ds, truth, "link", 24, "er", "btl", n_repeats=2)
    b = run_model_eval(ds.scores.copy(), ds, truth, "link", 24, "er", "btl", n_repeats=2)
    assert a.rows == b.rows
    with pytest.raises(ValidationError):
        run_model_eval({}, ds, truth, "link", 24, "er", "btl")


def test_dev_preferences(small_synth):
    ds, _ = small_synth
    nds = normalize(ds)
    p, gt = dev_preferences(nds.scores.copy(), nds, 500, seed=0)
    assert p.shape == gt.shape == (500,)
    # perfect predictions: preference sign equals the ground truth outcome
    assert np.array_equal(np.sign(p).astype(int), gt)


def test_chart_svg(tmp_path):
    path = tmp_path / "c.svg"
    write_chart({"link/btl": [(175, 0.7), (30450, 0.99)], "rand/dc": [(175, 0.6), (30450, 0.98)]}, path,
                title="SRCC vs K")
    text = path.read_text()
    assert text.startswith("<svg") and "link/btl" in text and "</svg>" in text.strip()[-6:]


def test_method_enums_accepted(small_synth):
    ds, truth = small_synth
    res = run_bound_simulation(ds, truth, SimConfig(PairMethod.BS, (66,), aggregator=AggMethod.WC, n_runs=1))
    assert res.rows[0].method == "bs" and res.rows[0].aggregator == "wc"
