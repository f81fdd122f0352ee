#!/usr/bin/env python3
# Adaptive TAP against plain TAP: same moments, very different cost.
#
# adaTAP inverts an N x N matrix each iteration, TAP only does two
# matrix-vector products.

import numpy as np

from tapgrbm.adatap import compare_with_tap
from tapgrbm.model import GrbmModel
from tapgrbm.units import UnitParams

rng = np.random.default_rng(1)
print("    N   max|da|   TAP ms   adaTAP ms   ratio")
for n in (20, 50, 100, 200, 400):
    n_v, n_h = n * 3 // 4, n // 4
    W = rng.normal(0, 0.1 / np.sqrt(n), (n_v, n_h))
    m = GrbmModel(W, UnitParams.binary(rng.normal(size=n_v)), UnitParams.binary(rng.normal(size=n_h)))
    out = compare_with_tap(m, repeats=3)
    t, a = out["tap_seconds_per_iteration"], out["adatap_seconds_per_iteration"]
    print(f"{n:5d}  {out['max_diff_a']:.1e}  {t * 1e3:7.3f}  {a * 1e3:10.3f}  {a / t:6.1f}")
