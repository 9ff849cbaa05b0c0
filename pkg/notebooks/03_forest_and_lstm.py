# %% [markdown]
# # Feature elimination, random forest and LSTM
#
# The full ladder on one vehicle signal: keep half the features by recursive
# elimination, tune a forest with a short random search, then compare it with
# an LSTM over a seven-cycle lag.

# %%
import numpy as np

from t2g.evaluation import compute_metrics, split_chronological
from t2g.forest import ForestParams, rf_fit
from t2g.pipeline import evaluate_bundle, importance_table, select_features, simulate_matrices, train_model
from t2g.selection import RF_SPACE, cv_fit_eval, random_search, rf_fit_predict

m = simulate_matrices("zurich_like", 86400, seed=42, signals=["S4"])["S4"]
names = select_features(m, 27, step=9, seed=42)
print("kept", names)

# %% [markdown]
# Random search samples the forest space (estimators 50-200, depth 3-12,
# split size 2-6, leaf weight fraction 0-0.5) and scores each draw with
# chronological 3-fold CV on the training rows. Five trials keep this quick.

# %%
train, _ = split_chronological(m)
sub = train.select(names)
fit_eval = cv_fit_eval(sub.X, sub.y, 3, rf_fit_predict(ForestParams(seed=42)))
best, trials = random_search(RF_SPACE, 5, 3, 42, fit_eval)
for t in trials:
    print(t.trial, t.params, f"{t.mean_mae:.3f}")
print("best", best.trial)

# %%
reports = {}
for kind, params in (("naive", None), ("lr", None), ("rf", best.params), ("lstm", {"epochs": 60})):
    bundle = train_model(kind, m, None if kind == "naive" else names, params, seed=42)
    rep, base, test, pred = evaluate_bundle(bundle, m)
    reports[kind] = rep
    print(f"{kind:5s} MAE {rep.mae_s:5.2f}  RMSE {rep.rmse_s:5.2f}  EH {rep.eh_pct:5.1f}  NM {rep.nm_pct:5.1f}"
          f"  dMAE {rep.d_mae_pct:6.1f}%")
    if kind == "rf":
        rf_bundle = bundle

# %% [markdown]
# Which features carry the forest? For a signal that yields to tram priority
# the tram detectors' occupancy and last-detection gap rank near the top.

# %%
for name, v in importance_table(rf_bundle)[:8]:
    print(f"{name:8s} {v:.3f}")
