"""
Three pulse detectors on one packet
===================================

The exact detector enumerates every colliding bit pattern. The
Gaussian approximation enumerates only strong colliders, and soft
interference cancellation subtracts the expected interference and treats
the rest as noise. All three feed the same repetition-code symbol stage.
"""

import numpy as np

from uwbmud import (DetectorConfig, SystemConfig, build_collisions, default_plan, generate_bits,
                    generate_codes, make_rng, mrc_combine, run_iterative, synthesize_noiseless)
from uwbmud.channel import ChannelRealization, generate_cir, preset
from uwbmud.harness import noise_variance_for_snr

cfg = SystemConfig(num_users=4, symbols_per_packet=2000, frames_per_symbol=4, chips_per_frame=30,
                   channel_taps=12, sampled_paths=8)
rng = make_rng(3)
codes, bits = generate_codes(cfg, rng), generate_bits(cfg, rng)
channels = ChannelRealization.stack(
    [generate_cir(preset("cm1-like", 12), make_rng(3, k)) for k in range(4)], [0, 10, 10, 10])
plan = default_plan(4, 8)

noise = noise_variance_for_snr(6.0)
r = synthesize_noiseless(cfg, codes, channels, bits) + np.sqrt(noise) * rng.standard_normal(cfg.num_samples)
r_tilde = mrc_combine(r, codes, channels, plan)
collisions = build_collisions(codes, channels, plan, cfg)
print("largest collider count:", collisions.counts.max())

# %%
# Symbol error rate of the weak user after each iteration.
for mode, det in [("exact", DetectorConfig("exact")),
                  ("gaussian_lc", DetectorConfig("gaussian_lc", threshold_db=0.0)),
                  ("sic", DetectorConfig("sic"))]:
    result = run_iterative(mode, collisions, r_tilde, noise, det, iterations=3)
    errors = np.mean(result.decisions[:, 0, :] != bits.bits[0], axis=1)
    print(f"{mode:12s}", "  ".join(f"{e:.4f}" for e in errors))
