"""
Four ways to turn pairwise outcomes into system scores
======================================================

A toy tournament where A beats everyone, B and C trade wins, and D
plays many more games than the others while breaking even against B
and C. Winning counts put D level with the undefeated A because they
reward volume; differential counts and Bradley-Terry keep A on top.
"""
from prefsqa import agg_btl, agg_dc, agg_ps, agg_wc, rank, tally

W, D, L = 1, 0, -1
records = (
    [("A", "B", W)] * 3 + [("A", "C", W)] * 3 + [("A", "D", W)] * 2
    + [("B", "C", W)] * 2 + [("C", "B", W)] * 2
    + [("D", "B", W)] * 4 + [("D", "C", W)] * 4 + [("D", "B", L)] * 4 + [("D", "C", L)] * 4
    + [("B", "C", D)]
)
t = tally(records)
for s in t.systems:
    print(s, t.record(s))

for name, util in (("WC", agg_wc(t)), ("DC", agg_dc(t)), ("BTL", agg_btl(t))):
    print(f"{name:4s}", {s: round(v, 3) for s, v in util.scores.items()}, "ranks", rank(util))

# PS sums raw preferences in [-1, 1] instead of thresholded outcomes
prefs = [("A", "B", 0.6), ("A", "C", 0.4), ("B", "C", 0.05), ("C", "B", 0.1), ("D", "A", -0.7)]
ps = agg_ps(prefs)
print("PS  ", {s: round(v, 3) for s, v in ps.scores.items()}, "ranks", rank(ps))
