"""
Chip-level signal model and collisions
======================================

Three users share a time-hopping channel. Each frame carries one pulse per
user; multipath smears it over ``L`` chips, so pulses of different users
(and of neighbouring frames) land on the samples a Rake finger reads.
"""

import numpy as np

from uwbmud import (SystemConfig, build_collisions, default_plan, generate_bits, generate_codes,
                    make_rng, mrc_combine, synthesize_noiseless)
from uwbmud.channel import generate_cir, preset, ChannelRealization

cfg = SystemConfig(num_users=3, symbols_per_packet=4, frames_per_symbol=4, chips_per_frame=12,
                   channel_taps=6, sampled_paths=3)
rng = make_rng(7)
codes = generate_codes(cfg, rng)
bits = generate_bits(cfg, rng)
channels = ChannelRealization.stack(
    [generate_cir(preset("cm1-like", cfg.channel_taps), make_rng(7, k)) for k in range(3)],
    power_db=[0, 10, 10])

print("time-hopping codes of user 1:", codes.th_codes[0])
print("symbols of user 1:", bits.bits[0])

# %%
# The received vector has N P + L - 1 chips.
r = synthesize_noiseless(cfg, codes, channels, bits)
print("received samples:", r.shape[0])

# %%
# Combining the first M fingers gives one number per frame. The collision
# table explains it exactly: own amplitude times bit plus the weighted bits
# of every colliding pulse.
plan = default_plan(cfg.num_users, cfg.sampled_paths)
r_tilde = mrc_combine(r, codes, channels, plan)
collisions = build_collisions(codes, channels, plan, cfg)
rebuilt = collisions.amplitude * bits.pulse_bits + collisions.interference(bits.pulse_bits)
print("max reconstruction error:", np.max(np.abs(rebuilt - r_tilde)))

# %%
# Interferer counts per frame of user 1, and per-symbol maxima.
print("colliders per frame:", collisions.counts[0])
print("max per symbol:     ", collisions.symbol_maxima()[0])

desc = collisions.descriptor(0, int(np.argmax(collisions.counts[0])))
print(f"busiest pulse {desc.pulse}: interferers (user, pulse) =", desc.interferers.tolist())
