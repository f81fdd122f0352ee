#!/usr/bin/env python3
# Deep model: greedy layerwise pretraining, then joint TAP training.

import numpy as np

from tapgrbm.dbm import pretrain_greedy, train_dbm_joint
from tapgrbm.likelihood import landscape_report
from tapgrbm.training import TrainConfig

rng = np.random.default_rng(0)
protos = rng.random((10, 100)) < 0.3
X = protos[rng.integers(0, 10, 1000)].astype(float)
X = np.where(rng.random(X.shape) < 0.05, 1 - X, X)

# 5 pretraining epochs per layer at the pretraining rate (default is 50)
dbm, logs = pretrain_greedy((100, 16, 8), X, TrainConfig(epochs=5, gamma=0.001, seed=0))
print("layer sizes", dbm.sizes)
# layer 2 sees conditional means, not bits, so its monitor likelihood is undefined
print("layer-1 pretraining ll/unit:", [round(r["ll_per_unit"], 6) for r in logs[0]])

_, joint = train_dbm_joint(dbm, X, TrainConfig(epochs=3, seed=0))
for r in joint:
    print(f"joint epoch {r['epoch']}: ll/unit={r['ll_per_unit']:.9f}")

rep = landscape_report(dbm, X[:100])
print("unique deep TAP solutions:", rep.n_unique)
