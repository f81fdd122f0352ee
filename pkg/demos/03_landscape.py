#!/usr/bin/env python3
# Counting TAP solutions as the couplings get stronger.
#
# At weak coupling every initialization flows to the same fixed point. Past
# a critical weight scale the free energy develops many local minima.

import numpy as np

from tapgrbm.likelihood import landscape_report
from tapgrbm.model import GrbmModel
from tapgrbm.tap import random_inits
from tapgrbm.units import UnitParams

rng = np.random.default_rng(0)
n_v, n_h = 40, 20
vis, hid = UnitParams.binary(np.zeros(n_v)), UnitParams.binary(np.zeros(n_h))
inits = random_inits(vis, 200, rng)
base = rng.normal(size=(n_v, n_h))

print(" scale  converged  unique  mean F")
for scale in (0.05, 0.2, 0.5, 1.0, 2.0):
    rep = landscape_report(GrbmModel(scale * base, vis, hid), inits)
    print(f"{scale:6.2f}  {rep.n_converged:9d}  {rep.n_unique:6d}  {rep.mean_free_energy:8.3f}")

# the dedup tolerance only ever merges solutions
rep = [landscape_report(GrbmModel(1.0 * base, vis, hid), inits, dedup_tol=t).n_unique for t in (1e-8, 1e-4, 1e-2, 1e-1)]
print("unique vs tolerance", rep)
