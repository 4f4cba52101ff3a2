"""
Train on preferences, evaluate on regenerated test pairs
========================================================

A per-utterance score table stands in for a quality-prediction network.
It is trained so that ``alpha(pred_a - pred_b)`` matches the sign of the
rating difference for pairs rated by the same listener. The trained scores
are then evaluated two ways: by averaging per system, and by generating
fresh balanced test pairs, thresholding the predicted preferences with
equal-error-rate thresholds fitted on a held-out dev split, and counting
wins minus losses.
"""
import math

from prefsqa import (SynthConfig, TrainConfig, fit_eer_thresholds, generate_synthetic, normalize,
                     paired_t_test, run_model_eval, split_holdout, system_truth, train)
from prefsqa.simulate import dev_preferences

ds, _ = generate_synthetic(SynthConfig(n_systems=60, seed=5))
train_ds, dev_ds = split_holdout(ds, 1, seed=5)
print("train", train_ds, "\ndev  ", dev_ds)

history = []
model = train(normalize(train_ds), TrainConfig(epochs=100), history)
print(f"loss {history[0]:.4f} -> {history[-1]:.4f}")

# thresholds come from dev pairs, never from the evaluation ratings
p, gt = dev_preferences(model.predict_dataset(dev_ds), dev_ds, 20_000, seed=0, same_listener=False)
th = fit_eer_thresholds(p, gt)
print(f"EER thresholds [{th.t_lose:.3f}, {th.t_win:.3f}]")

truth = system_truth(train_ds)
pred = model.predict_dataset(train_ds)
k = 2 * math.comb(len(ds.systems), 2)
runs = {
    "UTP_SC": run_model_eval(pred, train_ds, truth, "bs", k, None, "mean", n_repeats=10),
    "UTP_BS_EER_DC": run_model_eval(pred, train_ds, truth, "bs", k, "eer", "dc", 10, thresholds=th),
    "UTP_BS_ER_BTL": run_model_eval(pred, train_ds, truth, "bs", k, "er", "btl", 10),
    "UTP_BS_PS": run_model_eval(pred, train_ds, truth, "bs", k, None, "ps", 10),
}
for name, res in runs.items():
    s = res.summary()[0]
    print(f"{name:14s} mean SRCC {s.mean_srcc:.4f} sd {s.sd_srcc:.4f}")

t, pval = paired_t_test(runs["UTP_BS_PS"].srcc_values(), runs["UTP_BS_ER_BTL"].srcc_values())
print(f"PS vs ER+BTL: t = {t:.3f}, p = {pval:.3g}")
