"""Weighted monotone least squares on a noisy sigmoid.

The fitter's inner loop estimates continuation values as nondecreasing
step functions of the observed statistic. This script fits one such
curve to synthetic data and prints the pooled blocks.
"""

import numpy as np

from blindsearch import pava

rng = np.random.default_rng(12)
n = 400
x = np.sort(rng.uniform(-4, 4, n))
truth = 1.0 / (1.0 + np.exp(-1.7 * x))
y = truth + rng.normal(0, 0.35, n)
w = rng.uniform(0.5, 2.0, n)

fn = pava(x, y, w)
sse = float(np.sum(w * (y - fn(x)) ** 2))

print(f"{n} points, {fn.levels.size} monotone blocks, weighted SSE {sse:.2f}")
print(f"{'block starts at x':>18}  {'level':>8}")
for bp, lv in zip(fn.breakpoints, fn.levels):
    print(f"{bp:18.3f}  {lv:8.4f}")

probe = np.array([-3.5, -1.0, 0.0, 1.0, 3.5])
err = np.abs(fn(probe) - 1.0 / (1.0 + np.exp(-1.7 * probe)))
print(f"max abs error at probe points: {err.max():.3f}")
