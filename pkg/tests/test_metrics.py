import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from prefsqa.aggregate import agg_dc, tally_indices
from prefsqa.errors import ValidationError
from prefsqa.metrics import lcc, paired_t_test, rank, srcc

from oracles import brute_force_rank, t_two_sided_quad


def test_rank_examples():
    assert rank({"A": 3, "B": 1, "C": 2}) == {"A": 1, "B": 3, "C": 2}
    assert rank({"A": 2, "B": 2}) == {"A": 1.5, "B": 1.5}
    assert rank({"A": 5, "B": 5, "C": 1, "D": 0}) == {"A": 1.5, "B": 1.5, "C": 3, "D": 4}


def test_rank_rejects_non_finite():
    with pytest.raises(ValidationError):
        rank({"A": float("nan"), "B": 1})


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.integers(-3, 3), min_size=1, max_size=25))
def test_rank_matches_brute_force(values):
    r = rank(values)
    assert r == brute_force_rank(values)
    n = len(values)
    assert sum(r.values()) == n * (n + 1) / 2


def test_srcc_examples():
    x = {"a": 1, "b": 2, "c": 3, "d": 4}
    assert srcc(x, x) == 1.0
    assert srcc(x, {k: -v for k, v in x.items()}) == -1.0
    # ranks (1,2,3,4) vs (1,2,4,3): Pearson on ranks = 0.8
    assert srcc(x, {"a": 1, "b": 2, "c": 4, "d": 3}) == pytest.approx(0.8, abs=1e-12)


def test_srcc_errors():
    with pytest.raises(ValidationError):
        srcc({"a": 1, "b": 1}, {"a": 1, "b": 2})
    with pytest.raises(ValidationError):
        srcc({"a": 1, "b": 2}, {"a": 1, "c": 2})


score_maps = st.lists(st.tuples(st.integers(-4, 4), st.floats(-10, 10, allow_nan=False)), min_size=3, max_size=20)


@given(score_maps)
def test_srcc_properties(pairs):
    x = {str(i): float(a) for i, (a, _) in enumerate(pairs)}
    y = {str(i): b for i, (_, b) in enumerate(pairs)}
    if len(set(x.values())) < 2 or len(set(y.values())) < 2:
        return
    r = srcc(x, y)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(srcc(y, x), abs=1e-12)
    # strictly increasing transform of x
    assert srcc({k: math.exp(v / 3) + v for k, v in x.items()}, y) == pytest.approx(r, abs=1e-12)
    keys = list(x)
    ref = stats.spearmanr([x[k] for k in keys], [y[k] for k in keys]).statistic
    assert r == pytest.approx(ref, abs=1e-12)


def test_srcc_tie_correct_differs_from_shortcut():
    x = {"a": 1, "b": 1, "c": 2, "d": 3}
    y = {"a": 1, "b": 2, "c": 3, "d": 4}
    rx, ry = rank(x), rank(y)
    d2 = sum((rx[k] - ry[k]) ** 2 for k in x)
    shortcut = 1 - 6 * d2 / (4 * (16 - 1))
    assert srcc(x, y) != pytest.approx(shortcut, abs=1e-6)
    assert srcc(x, y) == pytest.approx(stats.spearmanr([1, 1, 2, 3], [1, 2, 3, 4]).statistic)


def test_lcc_examples():
    x = [0.5, 1.0, 2.5, 4.0]
    assert lcc(x, [2 * v + 1 for v in x]) == pytest.approx(1.0)
    assert lcc(x, [-v for v in x]) == pytest.approx(-1.0)
    assert lcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        lcc([1, 1, 1], [1, 2, 3])


def test_ttest_examples():
    t, p = paired_t_test([1, -1, 1, -1], [0, 0, 0, 0])
    assert t == 0.0 and p == pytest.approx(1.0, abs=1e-12)
    t, p = paired_t_test([1, 2, 3], [0, 0, 0])
    assert t == pytest.approx(2 * math.sqrt(3), abs=1e-12)
    assert t == pytest.approx(3.4641, abs=1e-3)
    assert p == pytest.approx(0.0742, abs=1e-3)
    assert p == pytest.approx(t_two_sided_quad(t, 2), abs=1e-8)


def test_ttest_constant_shift_errors():
    b = [0.1, 0.7, 0.33, 0.9, 0.25]
    with pytest.raises(ValidationError, match="zero variance"):
        paired_t_test([v + 0.3 for v in b], b)


@given(st.lists(st.tuples(st.floats(-5, 5, allow_nan=False), st.floats(-5, 5, allow_nan=False)),
                min_size=2, max_size=30))
@settings(max_examples=80, deadline=None)
def test_ttest_against_quadrature_and_scipy(pairs):
    a = [x for x, _ in pairs]
    b = [y for _, y in pairs]
    d = np.subtract(a, b)
    if np.std(d, ddof=1) < 1e-6:
        return
    t, p = paired_t_test(a, b)
    t2, p2 = paired_t_test(b, a)
    assert t2 == pytest.approx(-t) and p2 == pytest.approx(p, abs=1e-15)
    assert p == pytest.approx(t_two_sided_quad(t, len(a) - 1), abs=1e-8)
    ref = stats.ttest_rel(a, b)
    assert t == pytest.approx(ref.statistic, rel=1e-9)


def test_rank_sums_on_random_tallies():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        k = int(rng.integers(1, 40))
        a = rng.integers(0, n, k)
        b = (a + rng.integers(1, n, k)) % n
        t = tally_indices(n, a, b, rng.integers(-1, 2, k))
        r = rank(agg_dc(t))
        assert sum(r.values()) == n * (n + 1) / 2
