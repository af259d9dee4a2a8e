"""Chip-sampled signal model of a synchronous TH-IR system.

Every user sends ``P`` binary symbols, each repeated over ``N_f`` frames
of ``N_c`` chips. Frame ``j`` of user ``k`` carries a single pulse at chip
``j * N_c + c[k, j]`` with polarity ``sign[k, j]`` and amplitude
``1 / sqrt(N_f)``. The pulse is spread by the user's ``L``-tap discrete
channel, so it lands on samples ``p, p + 1, ..., p + L - 1``.

Indexing is 0-based throughout: chips, samples, frames and users. Channel
taps keep the 1-based *path* labels ``l = 1..L`` only where a sampling plan
names them; tap ``l`` of a pulse at chip ``p`` sits at sample ``p + l - 1``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Raised for inconsistent system or experiment parameters."""


class DimensionError(ValueError):
    """Raised when arrays handed to the model have the wrong shape."""


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the TH-IR system."""

    num_users: int
    symbols_per_packet: int
    frames_per_symbol: int
    chips_per_frame: int
    channel_taps: int
    sampled_paths: int
    noise_variance: float = 0.0
    iterations: int = 3
    rng_seed: int = 0
    no_ifi: bool = False

    def __post_init__(self):
        for name in ("num_users", "symbols_per_packet", "frames_per_symbol",
                     "chips_per_frame", "channel_taps", "sampled_paths",
                     "iterations"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.sampled_paths > self.channel_taps:
            raise ConfigurationError(
                f"sampled_paths ({self.sampled_paths}) exceeds channel_taps ({self.channel_taps})")
        if self.noise_variance < 0 or not np.isfinite(self.noise_variance):
            raise ConfigurationError("noise_variance must be finite and nonnegative")
        if self.no_ifi and self.chips_per_frame <= self.channel_taps:
            raise ConfigurationError(
                "no_ifi requires chips_per_frame > channel_taps "
                f"({self.chips_per_frame} <= {self.channel_taps})")

    @property
    def processing_gain(self) -> int:
        return self.frames_per_symbol * self.chips_per_frame

    @property
    def num_pulses(self) -> int:
        """Pulses per user per packet, ``N_f * P``."""
        return self.frames_per_symbol * self.symbols_per_packet

    @property
    def num_samples(self) -> int:
        """Length of the received vector, ``N * P + L - 1``."""
        return self.processing_gain * self.symbols_per_packet + self.channel_taps - 1

    @property
    def th_code_range(self) -> int:
        """Number of admissible TH code values."""
        if self.no_ifi:
            return self.chips_per_frame - self.channel_taps
        return self.chips_per_frame

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class CodeBook:
    """Per-user TH codes and polarity signs, both shaped ``(K, N_f * P)``."""

    th_codes: np.ndarray
    signs: np.ndarray
    chips_per_frame: int
    frames_per_symbol: int

    @property
    def num_users(self) -> int:
        return self.th_codes.shape[0]

    @property
    def num_pulses(self) -> int:
        return self.th_codes.shape[1]

    @property
    def positions(self) -> np.ndarray:
        """0-based chip index of every pulse, ``j * N_c + c[k, j]``."""
        frames = np.arange(self.num_pulses) * self.chips_per_frame
        return frames[None, :] + self.th_codes

    @property
    def amplitudes(self) -> np.ndarray:
        """Signed spreading values ``sign / sqrt(N_f)``."""
        return self.signs / np.sqrt(self.frames_per_symbol)

    def subset(self, users) -> "CodeBook":
        users = np.atleast_1d(users)
        return CodeBook(self.th_codes[users], self.signs[users],
                        self.chips_per_frame, self.frames_per_symbol)

    def spreading_vector(self, k: int) -> np.ndarray:
        """Dense ternary spreading sequence ``s_k`` of length ``N * P``."""
        s = np.zeros(self.num_pulses * self.chips_per_frame)
        s[self.positions[k]] = self.amplitudes[k]
        return s


@dataclass(frozen=True)
class SymbolMatrix:
    """Transmitted symbols, ``bits[k, i]`` in {+1, -1}."""

    bits: np.ndarray
    frames_per_symbol: int

    @property
    def pulse_bits(self) -> np.ndarray:
        """Per-pulse symbols ``b_j^k``; frames of one symbol share its bit."""
        return np.repeat(self.bits, self.frames_per_symbol, axis=1)

    def subset(self, users) -> "SymbolMatrix":
        return SymbolMatrix(self.bits[np.atleast_1d(users)], self.frames_per_symbol)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *keys)``.

    Philox streams for distinct key tuples are independent, so trials can be
    generated in any order or in parallel.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


def generate_codes(config: SystemConfig, rng: np.random.Generator) -> CodeBook:
    """Draw i.i.d. uniform TH codes and polarity signs for every user."""
    if config.no_ifi and config.chips_per_frame <= config.channel_taps:
        raise ConfigurationError("no_ifi requires chips_per_frame > channel_taps")
    shape = (config.num_users, config.num_pulses)
    th_codes = rng.integers(0, config.th_code_range, size=shape)
    signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=shape)
    return CodeBook(th_codes, signs, config.chips_per_frame, config.frames_per_symbol)


def generate_bits(config: SystemConfig, rng: np.random.Generator) -> SymbolMatrix:
    bits = rng.choice(np.array([-1, 1], dtype=np.int8),
                      size=(config.num_users, config.symbols_per_packet))
    return SymbolMatrix(bits, config.frames_per_symbol)


def synthesize_noiseless(config: SystemConfig, codes: CodeBook, channels,
                         bits: SymbolMatrix) -> np.ndarray:
    """Noiseless received vector ``H S b`` by sparse convolution.

    ``channels`` is a :class:`~uwbmud.channel.ChannelRealization` or a raw
    ``(K, L)`` array of effective (power-scaled) taps.
    """
    taps = np.asarray(getattr(channels, "effective_taps", channels), dtype=float)
    K, L = config.num_users, config.channel_taps
    if taps.shape != (K, L):
        raise DimensionError(f"taps must have shape {(K, L)}, got {taps.shape}")
    if codes.th_codes.shape != (K, config.num_pulses):
        raise DimensionError(
            f"codes must have shape {(K, config.num_pulses)}, got {codes.th_codes.shape}")
    if bits.bits.shape != (K, config.symbols_per_packet):
        raise DimensionError(
            f"bits must have shape {(K, config.symbols_per_packet)}, got {bits.bits.shape}")

    weights = codes.amplitudes * bits.pulse_bits                  # (K, NP)
    contributions = weights[:, :, None] * taps[:, None, :]        # (K, NP, L)
    index = codes.positions[:, :, None] + np.arange(L)
    return np.bincount(index.ravel(), weights=contributions.ravel(),
                       minlength=config.num_samples)


def synthesize_received(config: SystemConfig, codes: CodeBook, channels,
                        bits: SymbolMatrix, rng: np.random.Generator | None = None) -> np.ndarray:
    """Received vector ``r = H S b + n`` with ``n ~ N(0, noise_variance I)``."""
    r = synthesize_noiseless(config, codes, channels, bits)
    if config.noise_variance > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_variance > 0")
        r = r + np.sqrt(config.noise_variance) * rng.standard_normal(r.shape)
    return r
