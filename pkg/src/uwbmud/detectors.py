"""Pulse-symbol iterative detection and its low-complexity variants.

The pulse stage computes, for every pulse, the extrinsic LLR of its bit
given the combined frame sample while marginalizing over the bits of the
pulses that collide with it. The symbol stage enforces that the ``N_f``
frames of a symbol carry the same bit, which for a repetition code reduces
to summing the other frames' LLRs. Three pulse stages are provided:

``exact``
    Full enumeration over all ``2**K~`` colliding bit patterns.
``gaussian_lc``
    Enumeration over strong colliders only; weak ones are treated as
    Gaussian noise.
``sic``
    Soft interference cancellation with a Gaussian residual, linear cost.

Scalar functions operate on one :class:`~uwbmud.frontend.CollisionDescriptor`;
the ``*_stage`` functions evaluate all pulses of a packet at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .frontend import CollisionDescriptor, Collisions

MODES = ("exact", "gaussian_lc", "sic")


class CapacityError(RuntimeError):
    """A pulse has more colliders than the enumeration limit allows."""


@dataclass(frozen=True)
class DetectorConfig:
    mode: str = "exact"
    threshold_db: float = 10.0
    top_delta: int | None = None
    max_exact_bits: int = 16
    llr_clamp: float = 50.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown detector mode {self.mode!r}; choose from {MODES}")
        if not self.llr_clamp > 0:
            raise ValueError("llr_clamp must be positive")
        if self.max_exact_bits < 0:
            raise ValueError("max_exact_bits must be nonnegative")


@dataclass
class LlrState:
    """Message-passing state after ``iteration`` sweeps (``lambda2`` is zero at 0)."""

    lambda1: np.ndarray
    lambda2: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, shape) -> "LlrState":
        return cls(np.zeros(shape), np.zeros(shape), 0)

    @property
    def posterior(self) -> np.ndarray:
        return self.lambda1 + self.lambda2


def prior_prob(bits, priors) -> float:
    """Probability of the +-1 vector ``bits`` when bit ``i`` has LLR ``priors[i]``."""
    bits = np.asarray(bits, dtype=float)
    priors = np.asarray(priors, dtype=float)
    if bits.shape != priors.shape:
        raise ValueError("bits and priors must have the same length")
    return float(np.prod((1.0 + bits * np.tanh(priors / 2.0)) / 2.0))


_PATTERN_CACHE: dict[int, np.ndarray] = {}


def bit_patterns(n: int) -> np.ndarray:
    """All ``2**n`` +-1 vectors of length ``n``, shape ``(2**n, n)``."""
    if n not in _PATTERN_CACHE:
        grid = np.array(list(itertools.product((1.0, -1.0), repeat=n))).reshape(2 ** n, n)
        _PATTERN_CACHE[n] = grid
    return _PATTERN_CACHE[n]


def _logsumexp(x):
    peak = np.max(x, axis=-1, keepdims=True)
    return peak[..., 0] + np.log(np.sum(np.exp(x - peak), axis=-1))


def _enumerated_llr(r, amplitude, variance, weights, priors):
    """Marginal LLR of a pulse bit by enumerating its colliders.

    Leading axes of all inputs broadcast; ``weights`` and ``priors`` carry
    the colliders on their last axis. The log prior of a pattern ``b`` is
    ``b . priors / 2`` up to a pattern-independent constant, which cancels
    between numerator and denominator.
    """
    n = weights.shape[-1]
    patterns = bit_patterns(n).T                             # (n, 2**n)
    error = np.asarray(r)[..., None] - weights @ patterns    # (..., 2**n)
    log_prior = 0.5 * (priors @ patterns)
    amplitude = np.asarray(amplitude)[..., None]
    scale = 1.0 / (2.0 * np.asarray(variance)[..., None])
    plus = log_prior - scale * (error - amplitude) ** 2
    minus = log_prior - scale * (error + amplitude) ** 2
    return _logsumexp(plus) - _logsumexp(minus)


def _noiseless_llr(r, amplitude, clamp):
    return np.sign(amplitude * r) * clamp


def _noiseless_enumerated_llr(r, amplitude, weights, clamp):
    """Zero-variance limit: saturate toward the hypothesis with the closest pattern."""
    patterns = bit_patterns(weights.shape[-1]).T
    error = np.asarray(r)[..., None] - weights @ patterns
    amplitude = np.asarray(amplitude)[..., None]
    plus = np.min((error - amplitude) ** 2, axis=-1)
    minus = np.min((error + amplitude) ** 2, axis=-1)
    return np.sign(minus - plus) * clamp


def _pulse_llr(r, amplitude, variance, weights, priors, clamp):
    if variance == 0:
        return float(_noiseless_enumerated_llr(r, amplitude, weights, clamp))
    value = float(_enumerated_llr(r, amplitude, variance, weights, priors))
    return float(np.clip(value, -clamp, clamp))


def pulse_llr_exact(desc: CollisionDescriptor, r_tilde: float, priors, noise_variance: float,
                    max_exact_bits: int = 16, llr_clamp: float = 50.0) -> float:
    """Extrinsic LLR of one pulse by exhaustive marginalization.

    ``priors`` lists the symbol-stage LLRs of ``desc.interferers`` in order.
    """
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (desc.num_interferers,):
        raise ValueError("one prior per interferer is required")
    if desc.num_interferers > max_exact_bits:
        raise CapacityError(
            f"pulse ({desc.user}, {desc.pulse}) has {desc.num_interferers} colliders "
            f"> max_exact_bits={max_exact_bits}")
    weights = desc.path_gains @ desc.coefficients
    variance = noise_variance * desc.path_energy
    return _pulse_llr(r_tilde, desc.amplitude, variance, weights, priors, llr_clamp)


def pulse_llr_gaussian_lc(desc: CollisionDescriptor, r_tilde: float, priors, noise_variance: float,
                          threshold_db: float | None = 10.0, top_delta: int | None = None,
                          max_exact_bits: int = 16, llr_clamp: float = 50.0) -> float:
    """Approximate extrinsic LLR with weak colliders treated as Gaussian noise.

    Passing ``top_delta`` selects the ``top_delta`` strongest colliders
    instead of using ``threshold_db``.
    """
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (desc.num_interferers,):
        raise ValueError("one prior per interferer is required")
    strong = desc.strong_mask(None if top_delta is not None else threshold_db, top_delta)
    weak = (desc.coefficients != 0) & ~strong
    keep = strong.any(axis=0)
    if keep.sum() > max_exact_bits:
        raise CapacityError(
            f"pulse ({desc.user}, {desc.pulse}) has {keep.sum()} strong colliders "
            f"> max_exact_bits={max_exact_bits}")
    weights = desc.path_gains @ (desc.coefficients * strong)
    weak_power = np.sum(weak * desc.coefficients ** 2, axis=1)          # per path
    variance = noise_variance * desc.path_energy + np.sum(desc.path_gains ** 2 * weak_power)
    return _pulse_llr(r_tilde, desc.amplitude, variance, weights[keep], priors[keep], llr_clamp)


def soft_estimates(priors) -> np.ndarray:
    """Conditional means ``E[b] = tanh(lambda / 2)``."""
    return np.tanh(np.asarray(priors, dtype=float) / 2.0)


def pulse_llr_sic(desc: CollisionDescriptor, samples, priors, noise_variance: float,
                  llr_clamp: float = 50.0) -> tuple[float, bool]:
    """Soft-interference-cancellation LLR from the raw per-path samples.

    Returns the LLR and whether it had to be clamped because the residual
    variance vanished.
    """
    samples = np.asarray(samples, dtype=float)
    priors = np.asarray(priors, dtype=float)
    if samples.shape != desc.path_gains.shape or priors.shape != (desc.num_interferers,):
        raise ValueError("need one sample per path and one prior per interferer")
    means = soft_estimates(priors)
    residual = samples - desc.coefficients @ means
    residual_power = (desc.coefficients ** 2) @ (1.0 - means ** 2)
    combined = desc.path_gains @ residual
    denominator = np.sum(desc.path_gains ** 2 * (noise_variance + residual_power))
    if denominator == 0:
        return float(_noiseless_llr(combined, desc.amplitude, llr_clamp)), True
    value = 4.0 * desc.amplitude * combined / denominator
    return float(np.clip(value, -llr_clamp, llr_clamp)), False


# Vectorized pulse stages over a whole packet -------------------------------------


def _check_capacity(collisions: Collisions, limit: int):
    worst = int(collisions.counts.max(initial=0))
    if worst > limit:
        raise CapacityError(f"{worst} colliders on one pulse exceeds max_exact_bits={limit}")


def enumeration_stage(collisions: Collisions, r_tilde: np.ndarray, lambda2: np.ndarray,
                      noise_variance: float, llr_clamp: float = 50.0) -> np.ndarray:
    """Extrinsic LLRs of all pulses by enumeration over the listed colliders.

    With full collisions this is the exact detector; with a partitioned set
    it is the Gaussian-approximation detector.
    """
    shape = collisions.amplitude.shape
    amplitude = collisions.amplitude.ravel()
    variance = (noise_variance * np.repeat(collisions.path_energy, shape[1])
                + collisions.extra_variance.ravel())
    r = np.asarray(r_tilde, dtype=float).ravel()
    priors_all = np.asarray(lambda2, dtype=float).ravel()
    counts = np.diff(collisions.offsets)
    out = np.empty(amplitude.size)

    zero_var = variance == 0
    for n in np.unique(counts):
        for noiseless in (False, True):
            sel = np.flatnonzero((counts == n) & (zero_var == noiseless))
            if sel.size == 0:
                continue
            slots = collisions.offsets[sel][:, None] + np.arange(n)
            weights = collisions.weight[slots]
            if noiseless:
                out[sel] = _noiseless_enumerated_llr(r[sel], amplitude[sel], weights, llr_clamp)
            else:
                priors = priors_all[collisions.interferer[slots]]
                out[sel] = _enumerated_llr(r[sel], amplitude[sel], variance[sel], weights, priors)
    return np.clip(out, -llr_clamp, llr_clamp).reshape(shape)


def sic_stage(collisions: Collisions, r_tilde: np.ndarray, lambda2: np.ndarray,
              noise_variance: float, llr_clamp: float = 50.0) -> tuple[np.ndarray, int]:
    """SIC LLRs of all pulses; also returns how many were clamped for a zero denominator.

    Works on the combined samples: cancelling ``h~ b_bar`` on every path and
    then combining equals subtracting ``sum_i weight_i b_bar_i`` from ``r~``.
    """
    shape = collisions.amplitude.shape
    means = soft_estimates(np.asarray(lambda2, dtype=float).ravel())[collisions.interferer]
    owner = collisions.owner
    n_owners = collisions.offsets.size - 1
    cancelled = np.bincount(owner, weights=collisions.weight * means, minlength=n_owners)
    residual_power = np.bincount(owner, weights=collisions.cancel_power * (1.0 - means ** 2),
                                 minlength=n_owners)
    combined = np.asarray(r_tilde, dtype=float).ravel() - cancelled
    denominator = (noise_variance * np.repeat(collisions.path_energy, shape[1])
                   + residual_power + collisions.extra_variance.ravel())
    amplitude = collisions.amplitude.ravel()
    degenerate = denominator == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        llr = np.where(degenerate, _noiseless_llr(combined, amplitude, llr_clamp),
                       4.0 * amplitude * combined / np.where(degenerate, 1.0, denominator))
    return np.clip(llr, -llr_clamp, llr_clamp).reshape(shape), int(degenerate.sum())


def symbol_update(lambda1: np.ndarray, frames_per_symbol: int) -> tuple[np.ndarray, np.ndarray]:
    """Repetition-code stage: extrinsic ``lambda2`` and posterior ``L2`` per pulse.

    ``lambda1`` has shape ``(K, N_f P)`` (or ``(N_f P,)``).
    """
    lambda1 = np.asarray(lambda1, dtype=float)
    blocks = lambda1.reshape(*lambda1.shape[:-1], -1, frames_per_symbol)
    totals = blocks.sum(axis=-1, keepdims=True)
    lambda2 = (totals - blocks).reshape(lambda1.shape)
    return lambda2, lambda2 + lambda1


def hard_decisions(lambda1: np.ndarray, frames_per_symbol: int) -> np.ndarray:
    """``sign`` of the per-symbol sum of pulse LLRs, with ``sign(0) = +1``."""
    lambda1 = np.asarray(lambda1, dtype=float)
    totals = lambda1.reshape(*lambda1.shape[:-1], -1, frames_per_symbol).sum(axis=-1)
    return np.where(totals >= 0, 1, -1).astype(np.int8)


@dataclass
class IterativeResult:
    """Decisions after each iteration, shape ``(N_i, K, P)``, and optional LLR trace."""

    decisions: np.ndarray
    trace: list = field(default_factory=list)
    clamped: int = 0


def run_iterative(mode: str, collisions: Collisions, r_tilde: np.ndarray, noise_variance: float,
                  config: DetectorConfig | None = None, iterations: int = 3,
                  keep_trace: bool = False) -> IterativeResult:
    """Alternate pulse and symbol stages for ``iterations`` sweeps.

    All users are updated from the previous sweep's ``lambda2`` (Jacobi
    schedule), so the result does not depend on user order.
    """
    config = config or DetectorConfig(mode=mode)
    if mode not in MODES:
        raise ValueError(f"unknown detector mode {mode!r}; choose from {MODES}")
    if mode == "gaussian_lc":
        if config.top_delta is not None:
            collisions = collisions.partition(top_delta=config.top_delta)
        else:
            collisions = collisions.partition(threshold_db=config.threshold_db)
    if mode != "sic":
        _check_capacity(collisions, config.max_exact_bits)

    Nf = collisions.frames_per_symbol
    state = LlrState.initial(collisions.amplitude.shape)
    decisions, trace, clamped = [], [], 0
    for n in range(1, iterations + 1):
        if mode == "sic":
            lambda1, hit = sic_stage(collisions, r_tilde, state.lambda2, noise_variance,
                                     config.llr_clamp)
            clamped += hit
        else:
            lambda1 = enumeration_stage(collisions, r_tilde, state.lambda2, noise_variance,
                                        config.llr_clamp)
        lambda2, _ = symbol_update(lambda1, Nf)
        state = LlrState(lambda1, np.clip(lambda2, -config.llr_clamp, config.llr_clamp), n)
        decisions.append(hard_decisions(lambda1, Nf))
        if keep_trace:
            trace.append(state)
    return IterativeResult(np.array(decisions), trace, clamped)


def mrc_rake_decide(r_tilde: np.ndarray, codes) -> np.ndarray:
    """Conventional MRC-Rake: sign of the polarity-corrected sum over a symbol's frames."""
    statistic = codes.signs * np.asarray(r_tilde, dtype=float)
    return hard_decisions(statistic, codes.frames_per_symbol)
