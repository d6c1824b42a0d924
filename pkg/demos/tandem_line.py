"""Fluid tandem line: the exponential rate from a one-dimensional optimization.

Work arrives in Exp(1) batches every 2 time units into two stations with
drain rates 1.5 and 1.2. The slowest station sets the rate: minimize
E exp(a (Z - r T)) over a, then the distance to stationarity decays like
lambda^n.

    python3 demos/tandem_line.py
"""
import math

import numpy as np

from wassbound import bounds, certify, metrics
from wassbound.distributions import Deterministic, Exponential
from wassbound.models import Tandem

Z, T = Exponential(1.0), Deterministic(2.0)
a, lam = certify.tandem_rate(Z, T, 1.2)
print(f"optimizer a = {a:.6f} (calculus: {1 - 1 / 2.4:.6f}), rate lambda = {lam:.6f} "
      f"(calculus: {2.4 * math.exp(-1.4):.6f})")

model = Tandem((1.5, 1.2), T, Z)
ns = np.arange(0, 16, 3)
bound = bounds.tandem_bound(ns, a, lam, Z)
curve = metrics.backward_distance_curve(model, np.zeros(2), 200, 20_000, seed=11, ns=ns)
print("\n   n      bound    coupled gap   stderr")
for n, b, v, e in zip(ns, bound, curve.value, curve.stderr):
    print(f"{n:4d}  {b:9.4f}  {v:12.5f}  {e:7.5f}")
pos = curve.value > 0
slope = np.polyfit(ns[pos], np.log(curve.value[pos]), 1)[0]
print(f"\nfitted per-step decay of the gap: {math.exp(slope):.3f}  vs certified {lam:.3f}")
