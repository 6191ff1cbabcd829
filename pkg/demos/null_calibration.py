"""Check the null calibration of the layer statistics.

Simulates unmodulated arrival series, evaluates the fully coherent
statistic and its blocked variants at an arbitrary frequency, and
compares each against the chi-square(2)-family law the thresholds
assume. Run with no arguments.
"""

import numpy as np
from scipy import stats as sps

from blindsearch import FreqDrift, SignalSpec, blocked_power, rayleigh_power, simulate_photons

N_SIMS = 2000
M = 500
SPAN = 300.0
PROBE = FreqDrift(omega=7.3, omegadot=0.0)


def main():
    rng_seed = 0
    coherent = np.empty(N_SIMS)
    halves = np.empty(N_SIMS)
    for i in range(N_SIMS):
        series = simulate_photons(SignalSpec(PROBE, 0.0, M, SPAN), seed=(rng_seed, i))
        coherent[i] = rayleigh_power(series, PROBE)
        halves[i] = blocked_power(series, PROBE, kappa=1)

    ks = sps.kstest(coherent, sps.chi2(df=2).cdf).statistic
    print(f"coherent statistic over {N_SIMS} null series of {M} photons")
    print(f"  mean {coherent.mean():.3f} (expect 2), var {coherent.var():.3f} (expect 4)")
    print(f"  KS distance to chi2(2): {ks:.4f}")
    print(f"two-block statistic:")
    print(f"  mean {halves.mean():.3f} (expect 2), var {halves.var():.3f} (expect 2)")
    for p in (0.9, 0.99, 0.999):
        q = -2.0 * np.log1p(-p)
        print(f"  P(coherent > {q:6.2f}) = {np.mean(coherent > q):.4f}   (nominal {1-p:.3f})")


if __name__ == "__main__":
    main()
