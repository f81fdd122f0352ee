#!/usr/bin/env python3
# Tilted moments of the three unit priors.
#
# Every site of a model carries a prior P(x). Inference only ever asks one
# question of it: the mean and variance of P(x) exp(B x - A x^2 / 2) for a
# given pair of cavity fields (B, A).

import numpy as np
from scipy import integrate

from tapgrbm.units import UnitParams, tilted_moments

binary = UnitParams.binary(0.5)
tgauss = UnitParams.trunc_gauss(U=0.2, V=4.0, alpha=0.0, omega=1.0)
spike = UnitParams.tgb(rho=0.3, U=0.2, V=4.0, alpha=-1.0, omega=1.0)

for name, p in [("binary", binary), ("trunc. gauss", tgauss), ("gauss-bernoulli", spike)]:
    m = tilted_moments(p, B=1.5, A=0.4)
    print(f"{name:16s} log Z_Q={float(m.log_z):+.6f}  mean={float(m.a):.6f}  var={float(m.c):.6f}")

# cross-check the truncated Gaussian with plain quadrature
dens = lambda x: np.exp(0.2 * x - 2.0 * x**2 + 1.5 * x - 0.2 * x**2)
z = integrate.quad(dens, 0, 1)[0]
mean = integrate.quad(lambda x: x * dens(x), 0, 1)[0] / z
print("quadrature mean ", mean)

# negative total curvature (A + V < 0) is fine on a bounded interval
m = tilted_moments(tgauss, B=0.0, A=-30.0)
print("A+V=-26 mean/var", float(m.a), float(m.c))

# far-out fields: the mean hugs the boundary, the variance shrinks like 1/B^2
for B in (10.0, 100.0, 1000.0):
    m = tilted_moments(tgauss, B=B, A=0.0)
    print(f"B={B:7.0f}  1-mean={1 - float(m.a):.3e}  var={float(m.c):.3e}")

# fields broadcast over a layer
layer = UnitParams.binary(np.linspace(-2, 2, 5))
print(tilted_moments(layer, B=np.zeros(5), A=np.zeros(5)).a)
