"""Monte-Carlo experiment driver: BER sweeps, collision complexity, op counts.

Randomness is keyed by ``(seed, realization, stream, index)`` through
:func:`~uwbmud.model.make_rng`, so results do not depend on how
realizations are spread over worker processes.

Multiplication counting rules (per pulse and per iteration, channel-only
quantities such as collision weights and Gaussian-noise powers are formed
once per packet and not counted):

* MRC combining: ``M`` (every receiver).
* Enumeration with ``n`` colliders (exact, gaussian_lc):
  ``2**n * n`` for the pattern interference, ``2**n * (n + 1)`` for the
  pattern log-priors, ``4 * 2**n`` for squaring and scaling both hypotheses,
  ``2`` for the noise scaling. Total ``M + 2**n * (2n + 5) + 2``.
* SIC with ``n`` colliders: ``n`` tanh arguments, ``n`` soft-estimate
  weightings, ``n`` squares, ``n`` residual-power products, ``1`` for the
  noise term and ``3`` for the final ratio. Total ``M + 4n + 4``.
* Symbol stage and hard decisions: additions and sign tests only, ``0``.

The ``multiplications_per_symbol`` column reports the count for the user of
interest, cumulative over iterations ``1..n``, divided by its number of
detected symbols.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
import dataclasses
from dataclasses import dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np
import yaml

from .channel import ChannelRealization, fit_taps, flat_channel, generate_cir, load_cir, preset
from .detectors import DetectorConfig, mrc_rake_decide, run_iterative
from .frontend import SamplingPlan, build_collisions, default_plan, mrc_combine, strongest_plan
from .model import (ConfigurationError, SystemConfig, generate_bits, generate_codes, make_rng,
                    synthesize_noiseless)

RECEIVERS = ("mrc_rake", "exact", "gaussian_lc", "sic", "single_user_bound")
BER_COLUMNS = ("receiver", "iteration", "snr_db", "symbols", "errors", "ber", "stderr", "realizations")
COMPLEXITY_COLUMNS = ("realization", "n_f", "threshold_db", "y", "y_tilde")
MULTIPLICATION_COLUMNS = ("receiver", "iteration", "multiplications_per_symbol")

# rng stream ids
_CHANNEL, _CODES, _BITS, _NOISE = range(4)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment."""

    config: SystemConfig
    snr_grid: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    receivers: tuple = ("mrc_rake", "gaussian_lc", "sic", "single_user_bound")
    channel: str = "cm1-like"
    cir_paths: tuple = ()
    chip_period: float = 2.0
    interferer_power_db: float | tuple = 10.0
    realizations: int = 20
    symbols_per_realization: int = 20000
    thresholds_db: tuple = (10.0,)
    top_delta: int | None = None
    max_exact_bits: int = 16
    llr_clamp: float = 50.0
    sampling: str = "first"
    complexity_frames: tuple = (1, 5, 20)
    complexity_thresholds: tuple = (-10.0, 0.0, 3.0, 10.0)
    processing_gain: int | None = None

    def __post_init__(self):
        for name in ("snr_grid", "receivers", "cir_paths", "thresholds_db",
                     "complexity_frames", "complexity_thresholds"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        if not self.receivers:
            raise ConfigurationError("receivers must not be empty")
        unknown = set(self.receivers) - set(RECEIVERS)
        if unknown:
            raise ConfigurationError(f"unknown receivers {sorted(unknown)}; choose from {RECEIVERS}")
        if not self.snr_grid:
            raise ConfigurationError("snr_grid must not be empty")
        if self.realizations < 1:
            raise ConfigurationError("realizations must be at least 1")
        if self.symbols_per_realization < 1:
            raise ConfigurationError("symbols_per_realization must be at least 1")
        if self.sampling not in ("first", "strongest"):
            raise ConfigurationError("sampling must be 'first' or 'strongest'")
        if not self.cir_paths and self.channel != "flat":
            preset(self.channel, 1)
        if "gaussian_lc" in self.receivers and not self.thresholds_db and self.top_delta is None:
            raise ConfigurationError("gaussian_lc needs thresholds_db or top_delta")

    @property
    def packets(self) -> int:
        return math.ceil(self.symbols_per_realization / self.config.symbols_per_packet)

    def interferer_offsets(self) -> np.ndarray:
        """Per-user power offsets in dB; the user of interest is 0 dB."""
        K = self.config.num_users
        offsets = np.zeros(K)
        value = np.atleast_1d(np.asarray(self.interferer_power_db, dtype=float))
        if K > 1:
            offsets[1:] = value if value.size == K - 1 else value[0]
        return offsets

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


_SPEC_KEYS = {f.name for f in fields(ExperimentSpec)} - {"config"}
_CONFIG_KEYS = {f.name for f in fields(SystemConfig)}


def spec_from_mapping(values: dict, seed: int | None = None) -> ExperimentSpec:
    """Build a spec from flat keys naming :class:`SystemConfig` and spec fields."""
    unknown = set(values) - _SPEC_KEYS - _CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f"unknown configuration keys {sorted(unknown)}")
    config_values = {k: v for k, v in values.items() if k in _CONFIG_KEYS}
    if seed is not None:
        config_values["rng_seed"] = seed
    missing = {"num_users", "symbols_per_packet", "frames_per_symbol", "chips_per_frame",
               "channel_taps", "sampled_paths"} - set(config_values)
    if missing:
        raise ConfigurationError(f"missing configuration keys {sorted(missing)}")
    try:
        config = SystemConfig(**config_values)
        return ExperimentSpec(config=config, **{k: v for k, v in values.items() if k in _SPEC_KEYS})
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def load_spec(path, seed: int | None = None) -> ExperimentSpec:
    """Read a flat ``key: value`` YAML config file."""
    try:
        values = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if not isinstance(values, dict):
        raise ConfigurationError(f"{path}: expected a flat key-value mapping")
    return spec_from_mapping(values, seed)


def draw_channels(spec: ExperimentSpec, realization: int) -> ChannelRealization:
    """Unit-energy channels of all users, interferers scaled by their power offset."""
    cfg = spec.config
    users = []
    for k in range(cfg.num_users):
        if spec.cir_paths:
            loaded = load_cir(spec.cir_paths[(realization * cfg.num_users + k) % len(spec.cir_paths)],
                              normalize=False)
            users.append(fit_taps(loaded, cfg.channel_taps))
        elif spec.channel == "flat":
            users.append(flat_channel(cfg.channel_taps))
        else:
            params = preset(spec.channel, cfg.channel_taps, spec.chip_period)
            users.append(generate_cir(params, make_rng(cfg.rng_seed, realization, _CHANNEL, k)))
    return ChannelRealization.stack(users, spec.interferer_offsets())


def _plan(spec: ExperimentSpec, channels: ChannelRealization, config: SystemConfig):
    if spec.sampling == "strongest":
        return strongest_plan(channels, config.sampled_paths)
    return default_plan(config.num_users, config.sampled_paths)


def count_multiplications(receiver: str, counts: np.ndarray, sampled_paths: int,
                          iterations: int = 1) -> np.ndarray:
    """Multiplications per user for each iteration, shape ``(iterations, K)``.

    ``counts`` holds the enumerated (or cancelled) colliders of every pulse,
    shape ``(K, N_f P)``; it is ignored for the non-iterative receivers.
    """
    counts = np.asarray(counts, dtype=np.int64)
    M = sampled_paths
    if receiver in ("mrc_rake", "single_user_bound"):
        per_pulse = np.full(counts.shape, M, dtype=np.int64)
        iterations = 1
    elif receiver in ("exact", "gaussian_lc"):
        per_pulse = M + (2 ** counts) * (2 * counts + 5) + 2
    elif receiver == "sic":
        per_pulse = M + 4 * counts + 4
    else:
        raise ConfigurationError(f"unknown receiver {receiver!r}")
    per_user = per_pulse.sum(axis=1)
    return np.tile(per_user, (iterations, 1))


def _labels(spec: ExperimentSpec):
    """``(label, receiver, detector_config, iterations)`` for each curve family."""
    out = []
    for name in spec.receivers:
        if name == "gaussian_lc":
            if spec.top_delta is not None:
                out.append((f"gaussian_lc_delta{spec.top_delta}", name,
                            DetectorConfig("gaussian_lc", top_delta=spec.top_delta,
                                           max_exact_bits=spec.max_exact_bits,
                                           llr_clamp=spec.llr_clamp), spec.config.iterations))
            for T in spec.thresholds_db if spec.top_delta is None else ():
                out.append((f"gaussian_lc_T{T:g}", name,
                            DetectorConfig("gaussian_lc", threshold_db=T,
                                           max_exact_bits=spec.max_exact_bits,
                                           llr_clamp=spec.llr_clamp), spec.config.iterations))
        elif name in ("exact", "sic"):
            out.append((name, name, DetectorConfig(name, max_exact_bits=spec.max_exact_bits,
                                                   llr_clamp=spec.llr_clamp),
                        spec.config.iterations))
        else:
            out.append((name, name, None, 1))
    return out


def _ber_realization(spec: ExperimentSpec, realization: int) -> dict:
    """Error, symbol and multiplication counts of one channel realization."""
    cfg = spec.config
    seed = cfg.rng_seed
    channels = draw_channels(spec, realization)
    plan = _plan(spec, channels, cfg)
    labels = _labels(spec)
    n_snr = len(spec.snr_grid)
    errors = {label: np.zeros((iters, n_snr), dtype=np.int64) for label, _, _, iters in labels}
    mults = {label: np.zeros(iters, dtype=np.int64) for label, _, _, iters in labels}
    excluded = set()
    iterative = any(rx in ("exact", "gaussian_lc", "sic") for _, rx, _, _ in labels)
    su_cfg = cfg.replace(num_users=1)
    su_channels = channels.subset(0)
    su_plan = SamplingPlan(plan.path_sets[:1])

    for packet in range(spec.packets):
        codes = generate_codes(cfg, make_rng(seed, realization, _CODES, packet))
        bits = generate_bits(cfg, make_rng(seed, realization, _BITS, packet))
        noise = make_rng(seed, realization, _NOISE, packet).standard_normal(cfg.num_samples)
        clean = synthesize_noiseless(cfg, codes, channels, bits)
        collisions = build_collisions(codes, channels, plan, cfg) if iterative else None
        if "single_user_bound" in spec.receivers:
            su_clean = synthesize_noiseless(su_cfg, codes.subset(0), su_channels, bits.subset(0))

        active = []
        for label, rx, det, iters in labels:
            if label in excluded:
                continue
            if rx in ("exact", "gaussian_lc"):
                part = collisions
                if rx == "gaussian_lc":
                    part = (collisions.partition(top_delta=det.top_delta) if det.top_delta is not None
                            else collisions.partition(threshold_db=det.threshold_db))
                counts = part.counts
                if counts.max(initial=0) > det.max_exact_bits:
                    excluded.add(label)
                    continue
            elif rx == "sic":
                counts = collisions.counts
            else:
                counts = np.zeros((cfg.num_users, cfg.num_pulses), dtype=int)
            mults[label] += count_multiplications(rx, counts, cfg.sampled_paths, iters)[:, 0]
            active.append((label, rx, det, iters))

        truth = bits.bits[0]
        for s, snr in enumerate(spec.snr_grid):
            variance = noise_variance_for_snr(snr)
            sigma = math.sqrt(variance)
            r_tilde = mrc_combine(clean + sigma * noise, codes, channels, plan)
            for label, rx, det, iters in active:
                if rx == "mrc_rake":
                    decisions = mrc_rake_decide(r_tilde, codes)[None]
                elif rx == "single_user_bound":
                    su_tilde = mrc_combine(su_clean + sigma * noise, codes.subset(0), su_channels, su_plan)
                    decisions = mrc_rake_decide(su_tilde, codes.subset(0))[None]
                else:
                    decisions = run_iterative(rx, collisions, r_tilde, variance, det, iters).decisions
                errors[label][:, s] += np.count_nonzero(decisions[:, 0, :] != truth, axis=1)

    for label in excluded:
        errors[label][:] = 0
        mults[label][:] = 0
    return {"errors": errors, "mults": mults, "excluded": sorted(excluded),
            "symbols": spec.packets * cfg.symbols_per_packet}


def noise_variance_for_snr(snr_db: float) -> float:
    """Per-sample noise variance ``N0 / 2`` at ``Eb/N0 = snr_db`` with unit ``Eb``."""
    return 1.0 / (2.0 * 10.0 ** (snr_db / 10.0))


def _map_realizations(func, spec: ExperimentSpec, threads: int):
    jobs = range(spec.realizations)
    if threads <= 1:
        return [func(spec, r) for r in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(partial(func, spec), jobs))


@dataclass
class BerResult:
    rows: list
    multiplications: list
    excluded: dict = field(default_factory=dict)


def run_ber(spec: ExperimentSpec, threads: int = 1) -> BerResult:
    """BER of user 1 for every receiver, iteration and SNR point."""
    results = _map_realizations(_ber_realization, spec, threads)
    labels = _labels(spec)
    symbols_per = results[0]["symbols"]
    rows, mult_rows, excluded = [], [], {}
    for label, rx, _, iters in labels:
        bad = sum(label in res["excluded"] for res in results)
        used = spec.realizations - bad
        if bad:
            excluded[label] = bad
        errors = sum(res["errors"][label] for res in results)
        mults = sum(res["mults"][label] for res in results)
        symbols = used * symbols_per
        for it in range(iters):
            iteration = it + 1 if rx in ("exact", "gaussian_lc", "sic") else 0
            for s, snr in enumerate(spec.snr_grid):
                e = int(errors[it, s])
                ber = e / symbols if symbols else float("nan")
                stderr = math.sqrt(ber * (1 - ber) / symbols) if symbols else float("nan")
                rows.append(dict(receiver=label, iteration=iteration, snr_db=float(snr),
                                 symbols=symbols, errors=e, ber=ber, stderr=stderr,
                                 realizations=used))
            # user 1 only, cumulative through this iteration
            per_symbol = mults[: it + 1].sum() / symbols if symbols else float("nan")
            mult_rows.append(dict(receiver=label, iteration=iteration,
                                  multiplications_per_symbol=float(per_symbol)))
    return BerResult(rows, mult_rows, excluded)


@dataclass(frozen=True)
class ComplexityRecord:
    realization: int
    n_f: int
    threshold_db: float
    y: int
    y_tilde: int


def _complexity_realization(spec: ExperimentSpec, realization: int) -> list:
    base = spec.config
    channels = draw_channels(spec, realization)
    records = []
    for n_f in spec.complexity_frames:
        chips = spec.processing_gain // n_f if spec.processing_gain else base.chips_per_frame
        cfg = base.replace(frames_per_symbol=n_f, chips_per_frame=chips)
        codes = generate_codes(cfg, make_rng(base.rng_seed, realization, _CODES, n_f))
        plan = _plan(spec, channels, cfg)
        collisions = build_collisions(codes, channels, plan, cfg)
        y = collisions.symbol_maxima()[0]
        for T in spec.complexity_thresholds:
            y_tilde = collisions.partition(threshold_db=T).symbol_maxima()[0]
            records.extend(ComplexityRecord(realization, n_f, float(T), int(a), int(b))
                           for a, b in zip(y, y_tilde))
    return records


def run_complexity(spec: ExperimentSpec, threads: int = 1) -> list:
    """Per-symbol ``Y`` and ``Y~`` of user 1 over realizations, pulse rates and thresholds."""
    chunks = _map_realizations(_complexity_realization, spec, threads)
    return [record for chunk in chunks for record in chunk]


def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted support points and ``P(X <= x)`` at each."""
    values = np.sort(np.asarray(values))
    support, counts = np.unique(values, return_counts=True)
    return support, np.cumsum(counts) / values.size


def complexity_rows(records) -> list:
    return [dict(realization=r.realization, n_f=r.n_f, threshold_db=r.threshold_db,
                 y=r.y, y_tilde=r.y_tilde) for r in records]


def _format(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        return f"{value:.6e}" if value != int(value) or abs(value) >= 1e6 else f"{value:g}"
    return str(value)


def render(rows: list, columns: tuple, fmt: str = "csv") -> str:
    """Serialize rows deterministically as CSV or JSON."""
    if not rows:
        raise ConfigurationError("nothing to emit")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([{c: row[c] for c in columns} for row in rows], indent=1) + "\n"
    raise ConfigurationError(f"unknown output format {fmt!r}")


def emit_results(rows: list, columns: tuple, fmt: str, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(rows, columns, fmt))
    return path


def snr_at_ber(rows: list, receiver: str, iteration: int, target: float = 1e-3) -> float:
    """SNR where a BER curve crosses ``target``, by log-linear interpolation.

    Returns ``nan`` if the curve never crosses.
    """
    pts = sorted((r["snr_db"], r["ber"]) for r in rows
                 if r["receiver"] == receiver and r["iteration"] == iteration)
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 >= target > b1:
            if b1 <= 0:
                return s1
            t = (math.log10(b0) - math.log10(target)) / (math.log10(b0) - math.log10(b1))
            return s0 + t * (s1 - s0)
    return float("nan")
