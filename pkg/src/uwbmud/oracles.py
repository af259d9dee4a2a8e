"""Brute-force reference implementations used to check the fast paths.

Nothing here shares code with the production modules beyond the data
containers: matrices are built densely from their column definitions and
likelihoods are enumerated term by term in plain Python.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def channel_matrix(taps, num_columns: int) -> np.ndarray:
    """``(NP + L - 1) x NP`` Toeplitz matrix whose column ``i`` is ``[0_i, h, 0]``."""
    taps = np.asarray(taps, dtype=float)
    L = taps.size
    H = np.zeros((num_columns + L - 1, num_columns))
    for i in range(num_columns):
        for l in range(L):
            H[i + l, i] = taps[l]
    return H


def spreading_matrix(codes, k: int, symbols: int) -> np.ndarray:
    """``NP x P`` block matrix holding the per-symbol spreading sequences of user ``k``."""
    Nc, Nf = codes.chips_per_frame, codes.frames_per_symbol
    N = Nf * Nc
    S = np.zeros((N * symbols, symbols))
    for j in range(codes.num_pulses):
        row = j * Nc + int(codes.th_codes[k, j])
        S[row, j // Nf] = codes.signs[k, j] / math.sqrt(Nf)
    return S


def dense_received(codes, taps, bits) -> np.ndarray:
    """Noiseless ``sum_k H_k S_k b_k`` by explicit matrix products."""
    taps = np.asarray(taps, dtype=float)
    K, P = bits.bits.shape
    N = codes.frames_per_symbol * codes.chips_per_frame
    r = np.zeros(N * P + taps.shape[1] - 1)
    for k in range(K):
        H = channel_matrix(taps[k], N * P)
        S = spreading_matrix(codes, k, P)
        r += H @ S @ bits.bits[k].astype(float)
    return r


def pulse_contribution(codes, H, q: int, a: int, sample: int) -> float:
    """Value pulse ``a`` of user ``q`` (channel matrix ``H``) adds to 0-based ``sample`` for bit +1."""
    column = a * codes.chips_per_frame + int(codes.th_codes[q, a])
    return float(H[sample, column] * codes.signs[q, a] / math.sqrt(codes.frames_per_symbol))


def naive_model(codes, taps, path_sets, k: int, j: int):
    """Desired amplitude, path gains and per-path interferer coefficients of pulse ``(k, j)``.

    Returns ``(amplitude, gains, interferers, coefficients)`` where
    ``coefficients`` maps each distinct interferer ``(q, a)`` to its list of
    per-path contributions.
    """
    taps = np.asarray(taps, dtype=float)
    gains = [float(taps[k, l - 1]) for l in path_sets[k]]
    amplitude = codes.signs[k, j] / math.sqrt(codes.frames_per_symbol) * sum(g * g for g in gains)
    N = codes.frames_per_symbol * codes.chips_per_frame
    P = codes.num_pulses // codes.frames_per_symbol
    matrices = [channel_matrix(taps[q], N * P) for q in range(codes.num_users)]
    coefficients = {}
    for m, l in enumerate(path_sets[k]):
        sample = j * codes.chips_per_frame + int(codes.th_codes[k, j]) + l - 1
        for q in range(codes.num_users):
            for a in range(codes.num_pulses):
                if (q, a) == (k, j):
                    continue
                value = pulse_contribution(codes, matrices[q], q, a, sample)
                if value != 0.0:
                    coefficients.setdefault((q, a), [0.0] * len(gains))[m] = value
    return amplitude, gains, sorted(coefficients), coefficients


def _log_sum(terms):
    peak = max(terms)
    return peak + math.log(math.fsum(math.exp(t - peak) for t in terms))


def naive_pulse_llr(codes, taps, path_sets, k: int, j: int, r_tilde: float,
                    lambda2: np.ndarray, noise_variance: float) -> float:
    """Extrinsic LLR of pulse ``(k, j)`` by listing every colliding bit pattern."""
    amplitude, gains, interferers, coefficients = naive_model(codes, taps, path_sets, k, j)
    variance = noise_variance * sum(g * g for g in gains)
    plus, minus = [], []
    for pattern in itertools.product((1, -1), repeat=len(interferers)):
        prior = 1.0
        mean = 0.0
        for bit, key in zip(pattern, interferers):
            prior *= 0.5 * (1.0 + bit * math.tanh(0.5 * lambda2[key]))
            mean += bit * sum(g * c for g, c in zip(gains, coefficients[key]))
        if prior == 0.0:
            continue
        plus.append(-(r_tilde - amplitude - mean) ** 2 / (2 * variance) + math.log(prior))
        minus.append(-(r_tilde + amplitude - mean) ** 2 / (2 * variance) + math.log(prior))
    return _log_sum(plus) - _log_sum(minus)


def naive_mrc(r, codes, taps, path_sets) -> np.ndarray:
    """Combined samples by explicit loops over users, pulses and paths."""
    taps = np.asarray(taps, dtype=float)
    out = np.zeros((codes.num_users, codes.num_pulses))
    for k in range(codes.num_users):
        for j in range(codes.num_pulses):
            for l in path_sets[k]:
                sample = j * codes.chips_per_frame + int(codes.th_codes[k, j]) + l - 1
                out[k, j] += taps[k, l - 1] * r[sample]
    return out


def exhaustive_map(codes, taps, path_sets, r_tilde: np.ndarray, noise_variance: float) -> np.ndarray:
    """Symbol-wise MAP decisions of all users from the combined samples.

    Each combined sample is modelled as Gaussian around its noiseless value
    with variance ``noise_variance * sum_m h_m^2``, independently across
    pulses, and every joint symbol vector is enumerated.
    """
    from .model import SymbolMatrix

    taps = np.asarray(taps, dtype=float)
    K = codes.num_users
    P = codes.num_pulses // codes.frames_per_symbol
    energy = np.array([sum(taps[k, l - 1] ** 2 for l in path_sets[k]) for k in range(K)])
    log_post = {}
    for flat in itertools.product((1, -1), repeat=K * P):
        bits = SymbolMatrix(np.array(flat, dtype=np.int8).reshape(K, P), codes.frames_per_symbol)
        mean = naive_mrc(dense_received(codes, taps, bits), codes, taps, path_sets)
        log_post[flat] = float(np.sum(-(r_tilde - mean) ** 2 / (2 * noise_variance * energy[:, None])))
    decisions = np.zeros((K, P), dtype=np.int8)
    for idx in range(K * P):
        plus = [v for f, v in log_post.items() if f[idx] == 1]
        minus = [v for f, v in log_post.items() if f[idx] == -1]
        decisions.flat[idx] = 1 if _log_sum(plus) >= _log_sum(minus) else -1
    return decisions


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def naive_gaussian_lc_llr(codes, taps, path_sets, k: int, j: int, r_tilde: float,
                          lambda2: np.ndarray, noise_variance: float, threshold_db: float) -> float:
    """Threshold-split LLR with the split decided entry by entry on each path.

    A per-path contribution is strong when the desired path tap is at most
    ``threshold_db`` above the interferer's tap (``10 log10`` of amplitudes).
    Strong contributions are enumerated; weak ones add their power as noise.
    """
    amplitude, gains, interferers, coefficients = naive_model(codes, taps, path_sets, k, j)
    taps = np.asarray(taps, dtype=float)
    scale = 1.0 / math.sqrt(codes.frames_per_symbol)
    strong_coef, weak_power = {}, 0.0
    for key in interferers:
        for m, c in enumerate(coefficients[key]):
            if c == 0.0:
                continue
            gap = 10 * math.log10(abs(gains[m])) - 10 * math.log10(abs(c) / scale)
            if gap <= threshold_db:
                strong_coef.setdefault(key, [0.0] * len(gains))[m] = c
            else:
                weak_power += gains[m] ** 2 * c ** 2
    variance = noise_variance * sum(g * g for g in gains) + weak_power
    keys = sorted(strong_coef)
    plus, minus = [], []
    for pattern in itertools.product((1, -1), repeat=len(keys)):
        prior = 1.0
        mean = 0.0
        for bit, key in zip(pattern, keys):
            prior *= 0.5 * (1.0 + bit * math.tanh(0.5 * lambda2[key]))
            mean += bit * sum(g * c for g, c in zip(gains, strong_coef[key]))
        if prior == 0.0:
            continue
        plus.append(-(r_tilde - amplitude - mean) ** 2 / (2 * variance) + math.log(prior))
        minus.append(-(r_tilde + amplitude - mean) ** 2 / (2 * variance) + math.log(prior))
    return _log_sum(plus) - _log_sum(minus)
