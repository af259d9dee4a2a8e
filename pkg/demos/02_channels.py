"""
Cluster-ray multipath channels
==============================

Chip-spaced channels drawn from the line-of-sight and non-line-of-sight
presets. The NLOS preset spreads its energy over many more taps.
"""

import numpy as np

from uwbmud import make_rng
from uwbmud.channel import generate_cir, preset

L = 50
for name in ("cm1-like", "cm3-like"):
    draws = [generate_cir(preset(name, L), make_rng(1, i)) for i in range(200)]
    taps = np.vstack([d.taps for d in draws])
    profile = np.mean(taps ** 2, axis=0)
    first10 = profile[:10].sum()
    rms = np.sqrt(np.sum(profile * np.arange(L) ** 2) - np.sum(profile * np.arange(L)) ** 2)
    captured = np.mean([d.captured_energy[0] for d in draws])
    print(f"{name}: energy in first 10 taps {first10:.2f}, rms delay spread {rms:.1f} chips, "
          f"energy kept by {L} taps {captured:.3f}")

# %%
# Average power-delay profile of the NLOS preset, in 5-tap groups.
for start in range(0, L, 5):
    share = profile[start:start + 5].sum()
    print(f"taps {start + 1:2d}-{start + 5:2d} {'#' * int(round(100 * share))}")
