"""Receiver front end: path sampling, MRC combining and collision bookkeeping.

For user ``k`` the receiver samples the received vector where pulse ``j``
arrives through each of the paths ``l_1^k, ..., l_M^k`` and combines the
``M`` samples with the path gains as weights. Every other pulse that has a
nonzero tap landing on one of those instants is an interferer of ``(k, j)``.

Interferer contributions only depend on the relative chip offset ``d``
between the interfering pulse and the pulse of interest, so all per-path
sums are tabulated once per ``(k, q, d)`` and looked up per colliding pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CodeBook, DimensionError, SystemConfig


@dataclass(frozen=True)
class SamplingPlan:
    """Combined path labels per user, ``path_sets[k]`` in ``1..L`` (1-based)."""

    path_sets: np.ndarray

    def __post_init__(self):
        paths = np.atleast_2d(np.asarray(self.path_sets, dtype=int))
        object.__setattr__(self, "path_sets", paths)
        for row in paths:
            if np.unique(row).size != row.size:
                raise ValueError("path indices must be distinct within a user")
        if paths.min() < 1:
            raise ValueError("path indices are 1-based")

    @property
    def num_paths(self) -> int:
        return self.path_sets.shape[1]

    def check(self, num_taps: int):
        if self.path_sets.max() > num_taps:
            raise DimensionError(f"path index {self.path_sets.max()} exceeds L={num_taps}")


def default_plan(num_users: int, num_paths: int) -> SamplingPlan:
    """Sample the first ``M`` paths ``{1, ..., M}`` of every user."""
    return SamplingPlan(np.tile(np.arange(1, num_paths + 1), (num_users, 1)))


def strongest_plan(channels, num_paths: int) -> SamplingPlan:
    """Sample each user's ``M`` strongest taps (kept in delay order)."""
    taps = np.asarray(getattr(channels, "taps", channels))
    order = np.argsort(-np.abs(taps), axis=1, kind="stable")[:, :num_paths]
    return SamplingPlan(np.sort(order, axis=1) + 1)


def sample_index(j: int, k: int, m: int, codes: CodeBook, plan: SamplingPlan) -> int:
    """Sample of pulse ``j`` of user ``k`` through its ``m``-th combined path.

    All arguments and the result use 1-based counting, so the value is
    ``(j - 1) * N_c + c_j^k + l_m^k``.
    """
    if not 1 <= k <= codes.num_users:
        raise IndexError(f"user {k} out of range 1..{codes.num_users}")
    if not 1 <= j <= codes.num_pulses:
        raise IndexError(f"pulse {j} out of range 1..{codes.num_pulses}")
    if not 1 <= m <= plan.num_paths:
        raise IndexError(f"path {m} out of range 1..{plan.num_paths}")
    return int((j - 1) * codes.chips_per_frame + codes.th_codes[k - 1, j - 1]
               + plan.path_sets[k - 1, m - 1])


def sampling_indices(codes: CodeBook, plan: SamplingPlan) -> np.ndarray:
    """0-based sample indices of all ``(k, j, m)``, shape ``(K, N_f P, M)``."""
    return codes.positions[:, :, None] + plan.path_sets[:, None, :] - 1


def path_gains(channels, plan: SamplingPlan) -> np.ndarray:
    """Gains ``h_{l_m^k}^k`` of the combined paths, shape ``(K, M)``."""
    taps = np.asarray(getattr(channels, "effective_taps", channels), dtype=float)
    plan.check(taps.shape[1])
    return np.take_along_axis(taps, plan.path_sets - 1, axis=1)


def path_samples(r: np.ndarray, codes: CodeBook, plan: SamplingPlan) -> np.ndarray:
    """Raw per-path samples ``r_{j,m}^k``, shape ``(K, N_f P, M)``."""
    return np.asarray(r)[sampling_indices(codes, plan)]


def mrc_combine(r: np.ndarray, codes: CodeBook, channels, plan: SamplingPlan) -> np.ndarray:
    """Maximal ratio combined frame samples ``r~_j^k``, shape ``(K, N_f P)``."""
    gains = path_gains(channels, plan)
    return np.einsum("kjm,km->kj", path_samples(r, codes, plan), gains)


@dataclass(frozen=True)
class CollisionDescriptor:
    """Per-path view of the interference seen by one pulse.

    ``coefficients[m, i]`` is the signed contribution of interferer ``i`` to
    the sample taken through path ``m`` (spreading value times the
    interferer's tap at that instant), zero when it does not reach that
    sample. ``interferer_taps`` holds the bare channel taps behind each
    coefficient and drives the strong/weak split.
    """

    user: int
    pulse: int
    amplitude: float
    path_gains: np.ndarray
    interferers: np.ndarray
    coefficients: np.ndarray
    interferer_taps: np.ndarray

    @property
    def num_interferers(self) -> int:
        return self.interferers.shape[0]

    @property
    def path_energy(self) -> float:
        return float(np.sum(self.path_gains ** 2))

    def collision_counts(self) -> np.ndarray:
        """``K_{j,m}^k`` per path, the desired pulse included."""
        return 1 + np.count_nonzero(self.coefficients, axis=1)

    def strong_mask(self, threshold_db: float | None = None,
                    top_delta: int | None = None) -> np.ndarray:
        """Entries of ``coefficients`` kept for enumeration, shape ``(M, n)``."""
        present = self.coefficients != 0
        if top_delta is not None:
            strength = np.max(np.abs(self.interferer_taps) * present, axis=0)
            order = np.lexsort((np.arange(strength.size), -strength))
            chosen = np.zeros(strength.size, dtype=bool)
            chosen[order[:top_delta]] = True
            return present & chosen[None, :]
        if threshold_db is None:
            return present
        with np.errstate(divide="ignore", invalid="ignore"):
            gap = (10 * np.log10(np.abs(self.path_gains))[:, None]
                   - 10 * np.log10(np.abs(self.interferer_taps)))
        return present & (gap <= threshold_db)


class _Geometry:
    """Codes, channel and plan of one packet plus the ``(k, q, m, d)`` tap table."""

    def __init__(self, codes: CodeBook, channels, plan: SamplingPlan):
        taps = np.asarray(getattr(channels, "effective_taps", channels), dtype=float)
        K, L = taps.shape
        if codes.num_users != K:
            raise DimensionError(f"codes have {codes.num_users} users, channels have {K}")
        plan.check(L)
        if plan.path_sets.shape[0] != K:
            raise DimensionError("sampling plan must list paths for every user")
        self.codes = codes
        self.taps = taps
        self.plan = plan
        self.num_users = K
        self.num_taps = L
        self.num_pulses = codes.num_pulses
        self.gains = path_gains(taps, plan)                      # (K, M)
        self.path_energy = np.sum(self.gains ** 2, axis=1)       # (K,)

        # tap_table[k, q, m, D] = h^q at the tap that puts a pulse of user q,
        # offset by d = D - (L - 1) chips, on path m of user k.
        offsets = np.arange(-(L - 1), L)
        idx = (plan.path_sets - 1)[:, :, None] - offsets[None, None, :]   # (K, M, 2L-1)
        valid = (idx >= 0) & (idx < L)
        gathered = taps[:, np.clip(idx, 0, L - 1)]                        # (Kq, K, M, 2L-1)
        self.tap_table = np.where(valid[None], gathered, 0.0).transpose(1, 0, 2, 3)
        self.present = self.tap_table != 0

        self._find_pairs()

    def _find_pairs(self):
        codes, L, NP = self.codes, self.num_taps, self.num_pulses
        pos = codes.positions.ravel()
        order = np.argsort(pos, kind="stable")
        sorted_pos = pos[order]
        owner_user = np.repeat(np.arange(self.num_users), NP)
        lo_off = self.plan.path_sets.min(axis=1) - L
        hi_off = self.plan.path_sets.max(axis=1) - 1
        lo = np.searchsorted(sorted_pos, pos + lo_off[owner_user], side="left")
        hi = np.searchsorted(sorted_pos, pos + hi_off[owner_user], side="right")
        counts = hi - lo
        owner = np.repeat(np.arange(pos.size), counts)
        start = np.repeat(lo - np.cumsum(counts) + counts, counts)
        cand = order[start + np.arange(owner.size)]

        keep = cand != owner
        owner, cand = owner[keep], cand[keep]
        k, q = owner // NP, cand // NP
        D = pos[cand] - pos[owner] + L - 1
        keep = self.present[k, q, :, D].any(axis=1)
        owner, cand, D = owner[keep], cand[keep], D[keep]
        sort = np.lexsort((cand, owner))
        self.owner = owner[sort]
        self.interferer = cand[sort]
        self.offset = D[sort]
        self.pair_sign = codes.signs.ravel()[self.interferer].astype(float)

    def tables(self, mask: np.ndarray):
        """Per-``(k, q, D)`` sums over the paths selected by ``mask``."""
        g = self.gains[:, None, :, None]
        kept = mask * g * self.tap_table
        weight = kept.sum(axis=2)
        power = (mask * (g * self.tap_table) ** 2).sum(axis=2)
        return weight, power

    def threshold_mask(self, threshold_db: float) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            gap = (10 * np.log10(np.abs(self.gains))[:, None, :, None]
                   - 10 * np.log10(np.abs(self.tap_table)))
        return self.present & (gap <= threshold_db)


@dataclass(frozen=True, eq=False)
class Collisions:
    """Packed collision descriptors of every pulse of every user.

    Pulses are addressed by the flat id ``k * N_f P + j``. The interferers of
    pulse ``o`` occupy ``slice(offsets[o], offsets[o + 1])`` of the pair
    arrays.

    Attributes
    ----------
    amplitude : ndarray, shape (K, N_f P)
        Effective amplitude ``sign / sqrt(N_f) * sum_m h_m^2`` of the pulse.
    path_energy : ndarray, shape (K,)
        ``sum_m h_m^2``; the combined noise variance is
        ``noise_variance * path_energy``.
    extra_variance : ndarray, shape (K, N_f P)
        Combined power of interference modelled as Gaussian noise (zero
        unless the set was partitioned).
    interferer : ndarray, shape (S,)
        Flat pulse id of each colliding pulse.
    weight : ndarray, shape (S,)
        ``sum_m h_m * coefficient_m``; the interferer's share of ``r~``.
    cancel_power : ndarray, shape (S,)
        ``sum_m h_m^2 * coefficient_m^2``, its combined power.
    """

    amplitude: np.ndarray
    path_energy: np.ndarray
    extra_variance: np.ndarray
    offsets: np.ndarray
    interferer: np.ndarray
    weight: np.ndarray
    cancel_power: np.ndarray
    frames_per_symbol: int
    geometry: _Geometry = field(repr=False)
    partition_key: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_users(self) -> int:
        return self.amplitude.shape[0]

    @property
    def num_pulses(self) -> int:
        return self.amplitude.shape[1]

    @property
    def counts(self) -> np.ndarray:
        """Number of distinct interferers ``K~_j^k`` (or strong ones), ``(K, N_f P)``."""
        return np.diff(self.offsets).reshape(self.amplitude.shape)

    @property
    def owner(self) -> np.ndarray:
        return np.repeat(np.arange(self.offsets.size - 1), np.diff(self.offsets))

    def symbol_maxima(self) -> np.ndarray:
        """Per-symbol ``max_j`` of the interferer counts, shape ``(K, P)``."""
        K, NP = self.amplitude.shape
        return self.counts.reshape(K, NP // self.frames_per_symbol, self.frames_per_symbol).max(axis=2)

    def interference(self, pulse_bits: np.ndarray) -> np.ndarray:
        """``sum_i weight_i * b_i`` per pulse for the given per-pulse bits."""
        flat = np.asarray(pulse_bits, dtype=float).ravel()
        total = np.bincount(self.owner, weights=self.weight * flat[self.interferer],
                            minlength=self.offsets.size - 1)
        return total.reshape(self.amplitude.shape)

    def descriptor(self, k: int, j: int) -> CollisionDescriptor:
        """Per-path descriptor of pulse ``j`` (0-based) of user ``k`` (0-based).

        Lists the distinct interferers of the full, unpartitioned collision
        set regardless of how this instance was partitioned.
        """
        geo = self.geometry
        o = k * geo.num_pulses + j
        sel = geo.owner == o
        cand, D = geo.interferer[sel], geo.offset[sel]
        q, a = cand // geo.num_pulses, cand % geo.num_pulses
        taps = geo.tap_table[k, q, :, D].T                      # (M, n)
        coef = taps * (geo.pair_sign[sel] / np.sqrt(self.frames_per_symbol))[None, :]
        amp = geo.codes.amplitudes[k, j] * geo.path_energy[k]
        return CollisionDescriptor(k, j, float(amp), geo.gains[k].copy(),
                                   np.column_stack([q, a]), coef, taps)

    def partition(self, threshold_db: float | None = None,
                  top_delta: int | None = None) -> "Collisions":
        """Keep strong interferers; fold the weak ones into ``extra_variance``.

        With ``threshold_db`` an entry on path ``m`` is strong when
        ``10 log10|h_m| - 10 log10|h_interferer| <= threshold_db``. With
        ``top_delta`` the ``top_delta`` interferers of largest peak tap are
        strong on every path and all others are weak.
        """
        if (threshold_db is None) == (top_delta is None):
            raise ValueError("give exactly one of threshold_db and top_delta")
        key = ("T", float(threshold_db)) if top_delta is None else ("delta", int(top_delta))
        if key in self._cache:
            return self._cache[key]
        geo = self.geometry
        NP, Nf = geo.num_pulses, self.frames_per_symbol
        k, q, D = geo.owner // NP, geo.interferer // NP, geo.offset
        n_owners = geo.num_users * NP

        if top_delta is None:
            mask = geo.threshold_mask(threshold_db)
            strong_weight, strong_power = geo.tables(mask)
            _, weak_power = geo.tables(geo.present & ~mask)
            strong = mask[k, q, :, D].any(axis=1)
            pair_weight = strong_weight[k, q, D]
            pair_power = strong_power[k, q, D]
            pair_weak = weak_power[k, q, D]
        else:
            weight, power = geo.tables(geo.present)
            peak = np.max(np.abs(geo.tap_table), axis=2)[k, q, D]
            order = np.lexsort((geo.interferer, -peak, geo.owner))
            rank = np.empty(order.size, dtype=int)
            counts = np.bincount(geo.owner, minlength=n_owners)
            starts = np.cumsum(counts) - counts
            rank[order] = np.arange(order.size) - starts[geo.owner[order]]
            strong = rank < top_delta
            pair_weight = weight[k, q, D]
            pair_power = power[k, q, D]
            pair_weak = np.where(strong, 0.0, power[k, q, D])

        extra = np.bincount(geo.owner, weights=pair_weak / Nf, minlength=n_owners)
        owner = geo.owner[strong]
        offsets = np.concatenate([[0], np.cumsum(np.bincount(owner, minlength=n_owners))])
        result = Collisions(
            amplitude=self.amplitude,
            path_energy=self.path_energy,
            extra_variance=extra.reshape(self.amplitude.shape),
            offsets=offsets,
            interferer=geo.interferer[strong],
            weight=geo.pair_sign[strong] / np.sqrt(Nf) * pair_weight[strong],
            cancel_power=pair_power[strong] / Nf,
            frames_per_symbol=Nf,
            geometry=geo,
            partition_key=key,
        )
        self._cache[key] = result
        return result


def build_collisions(codes: CodeBook, channels, plan: SamplingPlan,
                     config: SystemConfig | None = None) -> Collisions:
    """Enumerate every pulse's distinct interferers and their combined weights."""
    if config is not None:
        if codes.num_pulses != config.num_pulses or codes.num_users != config.num_users:
            raise DimensionError("codes do not match the system configuration")
    geo = _Geometry(codes, channels, plan)
    NP, Nf = geo.num_pulses, codes.frames_per_symbol
    weight, power = geo.tables(geo.present)
    k, q, D = geo.owner // NP, geo.interferer // NP, geo.offset
    n_owners = geo.num_users * NP
    offsets = np.concatenate([[0], np.cumsum(np.bincount(geo.owner, minlength=n_owners))])
    amplitude = codes.amplitudes * geo.path_energy[:, None]
    return Collisions(
        amplitude=amplitude,
        path_energy=geo.path_energy,
        extra_variance=np.zeros_like(amplitude),
        offsets=offsets,
        interferer=geo.interferer,
        weight=geo.pair_sign / np.sqrt(Nf) * weight[k, q, D],
        cancel_power=power[k, q, D] / Nf,
        frames_per_symbol=Nf,
        geometry=geo,
    )
