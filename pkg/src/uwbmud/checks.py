"""Randomized equivalence suites comparing the fast paths with the oracles.

Each ``check_*`` function draws its own small random instances from a seed
and returns a :class:`CheckResult`. The test-suite and the ``oracle-check``
command both run them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracles
from .detectors import (bit_patterns, enumeration_stage, hard_decisions, prior_prob,
                        pulse_llr_exact, pulse_llr_gaussian_lc, sic_stage)
from .frontend import SamplingPlan, build_collisions, mrc_combine
from .model import SystemConfig, generate_bits, generate_codes, make_rng, synthesize_noiseless


@dataclass(frozen=True)
class CheckResult:
    name: str
    instances: int
    worst: float
    tolerance: float
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.worst <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.instances} instances, worst {self.worst:.3e} "
                f"(tolerance {self.tolerance:g}), {self.failures} failures")


@dataclass
class Instance:
    config: SystemConfig
    codes: object
    taps: np.ndarray
    plan: SamplingPlan
    bits: object
    collisions: object


def random_instance(rng: np.random.Generator, max_users: int = 4, max_frames: int = 3,
                    max_taps: int = 4, max_colliders: int = 8, max_symbols: int = 2) -> Instance:
    """Small random system whose pulses have at most ``max_colliders`` colliders."""
    while True:
        K = int(rng.integers(1, max_users + 1))
        Nf = int(rng.integers(1, max_frames + 1))
        L = int(rng.integers(1, max_taps + 1))
        Nc = int(rng.integers(1, 2 * L + 2))
        P = int(rng.integers(1, max_symbols + 1))
        M = int(rng.integers(1, L + 1))
        config = SystemConfig(K, P, Nf, Nc, L, M)
        codes = generate_codes(config, rng)
        taps = rng.standard_normal((K, L)) * 10.0 ** (rng.uniform(-1, 1, size=(K, 1)))
        plan = SamplingPlan(np.array([np.sort(rng.choice(np.arange(1, L + 1), M, replace=False))
                                      for _ in range(K)]))
        collisions = build_collisions(codes, taps, plan, config)
        if collisions.counts.max(initial=0) <= max_colliders:
            return Instance(config, codes, taps, plan, generate_bits(config, rng), collisions)


def check_exact_oracle(instances: int = 1000, seed: int = 0, tolerance: float = 1e-9) -> CheckResult:
    """Batch and scalar exact LLRs against term-by-term enumeration."""
    rng = make_rng(seed, 1)
    worst = 0.0
    for _ in range(instances):
        inst = random_instance(rng)
        cfg, codes = inst.config, inst.codes
        noise = float(rng.uniform(0.05, 2.0))
        r = synthesize_noiseless(cfg, codes, inst.taps, inst.bits)
        r = r + math.sqrt(noise) * rng.standard_normal(r.shape)
        r_tilde = mrc_combine(r, codes, inst.taps, inst.plan)
        lambda2 = rng.normal(0.0, 3.0, size=r_tilde.shape)
        batch = enumeration_stage(inst.collisions, r_tilde, lambda2, noise, llr_clamp=1e9)
        k = int(rng.integers(cfg.num_users))
        j = int(rng.integers(cfg.num_pulses))
        desc = inst.collisions.descriptor(k, j)
        priors = lambda2[desc.interferers[:, 0], desc.interferers[:, 1]]
        scalar = pulse_llr_exact(desc, r_tilde[k, j], priors, noise, llr_clamp=1e9)
        naive = oracles.naive_pulse_llr(codes, inst.taps, inst.plan.path_sets, k, j,
                                        r_tilde[k, j], lambda2, noise)
        worst = max(worst, abs(batch[k, j] - naive), abs(scalar - naive))
    return CheckResult("exact pulse LLR vs naive enumeration", instances, worst, tolerance)


def check_prior_normalization(instances: int = 1000, seed: int = 0, max_bits: int = 10,
                              tolerance: float = 1e-12) -> CheckResult:
    """Probabilities of all bit patterns sum to one."""
    rng = make_rng(seed, 2)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(0, max_bits + 1))
        priors = rng.normal(0.0, 5.0, size=n)
        total = math.fsum(prior_prob(b, priors) for b in bit_patterns(n))
        worst = max(worst, abs(total - 1.0))
    return CheckResult("prior normalization", instances, worst, tolerance)


def check_reconstruction(instances: int = 500, seed: int = 0, tolerance: float = 1e-10) -> CheckResult:
    """Amplitude, interferer weights and bits rebuild the noiseless combined samples."""
    rng = make_rng(seed, 3)
    worst = 0.0
    for _ in range(instances):
        inst = random_instance(rng, max_colliders=64)
        cfg, codes = inst.config, inst.codes
        r = synthesize_noiseless(cfg, codes, inst.taps, inst.bits)
        dense = oracles.dense_received(codes, inst.taps, inst.bits)
        r_tilde = oracles.naive_mrc(dense, codes, inst.taps, inst.plan.path_sets)
        bits = inst.bits.pulse_bits
        rebuilt = inst.collisions.amplitude * bits + inst.collisions.interference(bits)
        k = int(rng.integers(cfg.num_users))
        j = int(rng.integers(cfg.num_pulses))
        desc = inst.collisions.descriptor(k, j)
        b_int = bits[desc.interferers[:, 0], desc.interferers[:, 1]]
        single = desc.amplitude * bits[k, j] + desc.path_gains @ desc.coefficients @ b_int
        worst = max(worst, float(np.max(np.abs(r - dense))),
                    float(np.max(np.abs(rebuilt - r_tilde))), abs(single - r_tilde[k, j]))
    return CheckResult("collision model reconstruction", instances, worst, tolerance)


def check_reductions(instances: int = 200, seed: int = 0) -> CheckResult:
    """Gaussian-LC with an infinite threshold is exact; SIC with true priors is error-free.

    ``worst`` is the largest LLR difference (must be exactly zero) and
    ``failures`` counts instances with any mismatch or decision error.
    """
    rng = make_rng(seed, 4)
    worst, failures = 0.0, 0
    for _ in range(instances):
        inst = random_instance(rng)
        cfg, codes = inst.config, inst.codes
        noise = float(rng.uniform(0.05, 2.0))
        clean = synthesize_noiseless(cfg, codes, inst.taps, inst.bits)
        noisy = clean + math.sqrt(noise) * rng.standard_normal(clean.shape)
        r_tilde = mrc_combine(noisy, codes, inst.taps, inst.plan)
        lambda2 = rng.normal(0.0, 3.0, size=r_tilde.shape)
        exact = enumeration_stage(inst.collisions, r_tilde, lambda2, noise)
        relaxed = enumeration_stage(inst.collisions.partition(threshold_db=math.inf),
                                    r_tilde, lambda2, noise)
        k = int(rng.integers(cfg.num_users))
        j = int(rng.integers(cfg.num_pulses))
        desc = inst.collisions.descriptor(k, j)
        priors = lambda2[desc.interferers[:, 0], desc.interferers[:, 1]]
        a = pulse_llr_exact(desc, r_tilde[k, j], priors, noise)
        b = pulse_llr_gaussian_lc(desc, r_tilde[k, j], priors, noise, threshold_db=math.inf)
        diff = max(float(np.max(np.abs(exact - relaxed))), abs(a - b))
        worst = max(worst, diff)
        mismatch = not (np.array_equal(exact, relaxed) and a == b)

        # noiseless SIC with priors saturated at the true bits
        truth = inst.bits.pulse_bits
        clean_tilde = mrc_combine(clean, codes, inst.taps, inst.plan)
        llr, _ = sic_stage(inst.collisions, clean_tilde, 50.0 * truth, 0.0)
        wrong = np.any(np.where(llr >= 0, 1, -1) != truth)
        wrong |= np.any(hard_decisions(llr, cfg.frames_per_symbol) != inst.bits.bits)
        failures += int(mismatch or wrong)
    return CheckResult("reduction identities", instances, worst, 0.0, failures)


SUITES = {
    "exact": check_exact_oracle,
    "priors": check_prior_normalization,
    "reconstruction": check_reconstruction,
    "reductions": check_reductions,
}


def run_all(seed: int = 0, scale: float = 1.0) -> list:
    """Run every suite; ``scale`` shrinks or grows the instance counts."""
    default = {"exact": 1000, "priors": 1000, "reconstruction": 500, "reductions": 200}
    return [func(instances=max(1, int(default[name] * scale)), seed=seed)
            for name, func in SUITES.items()]
