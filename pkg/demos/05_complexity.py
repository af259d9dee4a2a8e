"""
How many colliders must be enumerated?
======================================

For twenty equal-power users the number of colliders per symbol grows with
the number of frames per symbol at a fixed processing gain. A threshold
that keeps only strong colliders cuts it down.
"""

import numpy as np

from uwbmud.harness import empirical_cdf, run_complexity, spec_from_mapping

spec = spec_from_mapping(dict(
    num_users=20, symbols_per_packet=20, frames_per_symbol=5, chips_per_frame=50,
    channel_taps=25, sampled_paths=10, channel="cm1-like", interferer_power_db=0.0,
    realizations=30, complexity_frames=[1, 5, 20], complexity_thresholds=[-10, 0, 10],
    processing_gain=250), seed=4)
records = run_complexity(spec)

for n_f in (1, 5, 20):
    y = [r.y for r in records if r.n_f == n_f and r.threshold_db == -10]
    support, cdf = empirical_cdf(y)
    median = support[np.searchsorted(cdf, 0.5)]
    print(f"N_f={n_f:2d}: mean Y {np.mean(y):6.2f}, median {median}")
    for T in (-10, 0, 10):
        y_t = [r.y_tilde for r in records if r.n_f == n_f and r.threshold_db == T]
        print(f"        T={T:+3d} dB: mean Y~ {np.mean(y_t):6.2f}")
