"""Discrete multipath channels: a chip-binned cluster-ray generator and CIR files.

The generator follows the Saleh-Valenzuela structure used by the IEEE
802.15.3a channel models: Poisson cluster arrivals, Poisson ray arrivals
within each cluster and a double-exponential power profile. Rays are summed
coherently into chip-wide bins, truncated to ``L`` taps and normalized to
unit energy. Only the coarse shape (sparse, decaying, delay spread) matters
for the detectors, so per-ray lognormal fading is not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ConfigurationError


class CIRFormatError(ValueError):
    """Raised when a channel impulse response file cannot be used."""


@dataclass(frozen=True)
class ClusterRayParams:
    """Cluster-ray channel parameters; rates in 1/ns, times in ns."""

    cluster_rate: float
    ray_rate: float
    cluster_decay: float
    ray_decay: float
    num_taps: int
    chip_period: float = 2.0
    shadowing_std: float = 0.0

    def __post_init__(self):
        for name in ("cluster_rate", "ray_rate", "cluster_decay", "ray_decay", "chip_period"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be finite and strictly positive, got {value!r}")
        if int(self.num_taps) != self.num_taps or self.num_taps < 1:
            raise ConfigurationError(f"num_taps must be a positive integer, got {self.num_taps!r}")
        if self.shadowing_std < 0:
            raise ConfigurationError("shadowing_std must be nonnegative")

    @property
    def horizon(self) -> float:
        """Arrival-time cutoff in ns; independent of ``num_taps``.

        Beyond ten cluster plus ten ray decay constants the remaining power
        is below ``e**-10`` of the first ray.
        """
        return 10.0 * (self.cluster_decay + self.ray_decay)


# Parameter sets of the 802.15.3a CM-1 (LOS, 0-4 m) and CM-3 (NLOS, 4-10 m)
# scenarios.
PRESETS = {
    "cm1-like": dict(cluster_rate=0.0233, ray_rate=2.5, cluster_decay=7.1, ray_decay=4.3),
    "cm3-like": dict(cluster_rate=0.0667, ray_rate=2.1, cluster_decay=14.0, ray_decay=7.9),
}


def preset(name: str, num_taps: int, chip_period: float = 2.0) -> ClusterRayParams:
    try:
        values = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown channel preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ClusterRayParams(num_taps=num_taps, chip_period=chip_period, **values)


@dataclass(frozen=True)
class ChannelRealization:
    """Tap vectors of ``K`` users.

    Attributes
    ----------
    taps : ndarray, shape (K, L)
        Unit-energy tap vectors ``h_k``.
    power_scale : ndarray, shape (K,)
        Linear amplitude multiplier absorbing each user's energy per bit.
    captured_energy : ndarray, shape (K,)
        Fraction of the untruncated energy that falls in the first ``L`` taps.
    """

    taps: np.ndarray
    power_scale: np.ndarray = None
    captured_energy: np.ndarray = None

    def __post_init__(self):
        taps = np.atleast_2d(np.asarray(self.taps, dtype=float))
        object.__setattr__(self, "taps", taps)
        if self.power_scale is None:
            object.__setattr__(self, "power_scale", np.ones(taps.shape[0]))
        else:
            object.__setattr__(self, "power_scale", np.asarray(self.power_scale, dtype=float))
        if self.captured_energy is None:
            object.__setattr__(self, "captured_energy", np.ones(taps.shape[0]))
        if self.power_scale.shape != (taps.shape[0],):
            raise ValueError("power_scale must have one entry per user")

    @property
    def num_users(self) -> int:
        return self.taps.shape[0]

    @property
    def num_taps(self) -> int:
        return self.taps.shape[1]

    @property
    def effective_taps(self) -> np.ndarray:
        return self.taps * self.power_scale[:, None]

    def subset(self, users) -> "ChannelRealization":
        users = np.atleast_1d(users)
        return ChannelRealization(self.taps[users], self.power_scale[users],
                                  np.asarray(self.captured_energy)[users])

    @classmethod
    def stack(cls, realizations, power_db=None) -> "ChannelRealization":
        """Combine single-user realizations, scaling user ``k`` by ``power_db[k]`` dB."""
        taps = np.vstack([r.taps for r in realizations])
        captured = np.concatenate([np.asarray(r.captured_energy) for r in realizations])
        base = np.concatenate([r.power_scale for r in realizations])
        if power_db is not None:
            base = base * 10.0 ** (np.asarray(power_db, dtype=float) / 20.0)
        return cls(taps, base, captured)


def flat_channel(num_taps: int) -> ChannelRealization:
    """Single-path channel ``h = [1, 0, ..., 0]``."""
    taps = np.zeros(num_taps)
    taps[0] = 1.0
    return ChannelRealization(taps)


def _cluster_ray_arrivals(params: ClusterRayParams, rng: np.random.Generator):
    """Return arrival times (ns) and mean powers of all rays before the horizon."""
    horizon = params.horizon
    times, powers = [], []
    cluster_time = 0.0
    while cluster_time < horizon:
        ray_delay = 0.0
        while cluster_time + ray_delay < horizon:
            times.append(cluster_time + ray_delay)
            powers.append(math.exp(-cluster_time / params.cluster_decay)
                          * math.exp(-ray_delay / params.ray_decay))
            ray_delay += rng.exponential(1.0 / params.ray_rate)
        cluster_time += rng.exponential(1.0 / params.cluster_rate)
    return np.array(times), np.array(powers)


def generate_cir(params: ClusterRayParams, rng: np.random.Generator,
                 normalize: bool = True) -> ChannelRealization:
    """Draw one single-user chip-spaced channel from the cluster-ray model."""
    times, powers = _cluster_ray_arrivals(params, rng)
    amplitudes = np.sqrt(powers) * rng.choice([-1.0, 1.0], size=powers.size)
    if params.shadowing_std > 0:
        amplitudes *= 10.0 ** (params.shadowing_std * rng.standard_normal() / 20.0)

    bins = np.floor(times / params.chip_period).astype(int)
    full = np.bincount(bins, weights=amplitudes)
    total = float(np.sum(full ** 2))
    taps = np.zeros(params.num_taps)
    n = min(params.num_taps, full.size)
    taps[:n] = full[:n]
    kept = float(np.sum(taps ** 2))
    if kept == 0.0:
        raise ConfigurationError("channel realization has no energy in the first taps")
    if normalize:
        taps = taps / math.sqrt(kept)
    return ChannelRealization(taps, captured_energy=np.array([kept / total]))


def load_cir(path, normalize: bool = True) -> ChannelRealization:
    """Read a plain-text CIR file: one tap per line, ``#`` lines ignored."""
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            value = float(text)
        except ValueError:
            raise CIRFormatError(f"{path}:{lineno}: cannot parse {text!r} as a real number") from None
        if not math.isfinite(value):
            raise CIRFormatError(f"{path}:{lineno}: non-finite tap value {text!r}")
        values.append(value)
    if not values:
        raise CIRFormatError(f"{path}: no tap values found")
    taps = np.array(values)
    energy = float(np.sum(taps ** 2))
    if normalize:
        if energy == 0.0:
            raise CIRFormatError(f"{path}: all taps are zero")
        taps = taps / math.sqrt(energy)
    return ChannelRealization(taps)


def fit_taps(realization: ChannelRealization, num_taps: int, normalize: bool = True) -> ChannelRealization:
    """Truncate or zero-pad loaded taps to exactly ``num_taps``."""
    taps = np.zeros((realization.num_users, num_taps))
    n = min(num_taps, realization.num_taps)
    taps[:, :n] = realization.taps[:, :n]
    total = np.sum(realization.taps ** 2, axis=1)
    kept = np.sum(taps ** 2, axis=1)
    if normalize:
        if np.any(kept == 0):
            raise CIRFormatError("truncated channel has no energy")
        taps = taps / np.sqrt(kept)[:, None]
    return ChannelRealization(taps, realization.power_scale,
                              np.where(total > 0, kept / np.where(total > 0, total, 1), 0.0))
