import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwbmud import checks, oracles
from uwbmud.detectors import (CapacityError, DetectorConfig, bit_patterns,
                              enumeration_stage, hard_decisions, mrc_rake_decide, prior_prob,
                              pulse_llr_exact, pulse_llr_gaussian_lc, pulse_llr_sic, run_iterative,
                              sic_stage, soft_estimates, symbol_update)
from uwbmud.frontend import CollisionDescriptor, build_collisions, default_plan, mrc_combine
from uwbmud.model import (SystemConfig, generate_bits, generate_codes, make_rng,
                          synthesize_noiseless)


def lone_pulse(amplitude=1.0, gains=(1.0,)):
    gains = np.asarray(gains, dtype=float)
    return CollisionDescriptor(0, 0, amplitude, gains, np.zeros((0, 2), dtype=int),
                               np.zeros((gains.size, 0)), np.zeros((gains.size, 0)))


def noisy_instance(seed, **kw):
    rng = make_rng(seed, 20)
    inst = checks.random_instance(rng, **kw)
    noise = float(rng.uniform(0.05, 2.0))
    r = synthesize_noiseless(inst.config, inst.codes, inst.taps, inst.bits)
    r = r + math.sqrt(noise) * rng.standard_normal(r.shape)
    r_tilde = mrc_combine(r, inst.codes, inst.taps, inst.plan)
    lambda2 = rng.normal(0, 3, size=r_tilde.shape)
    return inst, r, r_tilde, lambda2, noise


def priors_of(desc, lambda2):
    return lambda2[desc.interferers[:, 0], desc.interferers[:, 1]]


# priors ---------------------------------------------------------------------


def test_uniform_priors():
    assert prior_prob([1, -1], [0.0, 0.0]) == 0.25


def test_certain_first_bit():
    assert prior_prob([1, -1], [50.0, 0.0]) == pytest.approx(0.5, abs=1e-12)


def test_tanh_prior_example():
    assert prior_prob([1, 1], [2 * math.log(3), 0.0]) == pytest.approx(0.45, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-60, 60), max_size=10))
def test_priors_sum_to_one(priors):
    total = math.fsum(prior_prob(b, priors) for b in bit_patterns(len(priors)))
    assert abs(total - 1.0) <= 1e-12


def test_soft_estimate_is_conditional_mean():
    for lam in (-7.0, -0.3, 0.0, 1.2, 30.0):
        mean = prior_prob([1], [lam]) - prior_prob([-1], [lam])
        assert soft_estimates(lam) == pytest.approx(mean, abs=1e-15)


# scalar pulse LLRs ----------------------------------------------------------


def test_isolated_pulse_llr():
    # combined noise variance 0.5
    assert pulse_llr_exact(lone_pulse(), 1.0, [], 0.5) == pytest.approx(4.0)


def test_isolated_pulse_sic_llr():
    llr, clamped = pulse_llr_sic(lone_pulse(), [1.0], [], 0.5)
    assert llr == pytest.approx(8.0)
    assert not clamped


def test_sic_clamps_without_noise():
    llr, clamped = pulse_llr_sic(lone_pulse(), [-0.2], [], 0.0, llr_clamp=50.0)
    assert (llr, clamped) == (-50.0, True)


@pytest.mark.parametrize("seed", range(30))
def test_exact_matches_enumeration_oracle(seed):
    inst, _, r_tilde, lambda2, noise = noisy_instance(seed)
    cfg = inst.config
    batch = enumeration_stage(inst.collisions, r_tilde, lambda2, noise, llr_clamp=1e9)
    for k in range(cfg.num_users):
        for j in range(cfg.num_pulses):
            desc = inst.collisions.descriptor(k, j)
            naive = oracles.naive_pulse_llr(inst.codes, inst.taps, inst.plan.path_sets, k, j,
                                            r_tilde[k, j], lambda2, noise)
            scalar = pulse_llr_exact(desc, r_tilde[k, j], priors_of(desc, lambda2), noise,
                                     llr_clamp=1e9)
            assert abs(scalar - naive) <= 1e-9
            assert abs(batch[k, j] - naive) <= 1e-9


def three_collider_pulse():
    for seed in range(1000):
        inst, _, r_tilde, lambda2, noise = noisy_instance(seed, max_users=4, max_taps=4)
        hits = np.argwhere(inst.collisions.counts == 3)
        if hits.size:
            return inst, r_tilde, lambda2, noise, tuple(hits[0])
    raise AssertionError("no three-collider pulse found")


def test_three_collider_exact():
    inst, r_tilde, lambda2, noise, (k, j) = three_collider_pulse()
    desc = inst.collisions.descriptor(k, j)
    naive = oracles.naive_pulse_llr(inst.codes, inst.taps, inst.plan.path_sets, k, j,
                                    r_tilde[k, j], lambda2, noise)
    assert abs(pulse_llr_exact(desc, r_tilde[k, j], priors_of(desc, lambda2), noise) - naive) <= 1e-9


@pytest.mark.parametrize("threshold", [-3.0, 0.0, 3.0, 10.0])
def test_gaussian_lc_matches_oracle(threshold):
    for seed in range(40):
        inst, _, r_tilde, lambda2, noise = noisy_instance(seed)
        for k, j in np.argwhere(inst.collisions.counts > 0)[:3]:
            desc = inst.collisions.descriptor(k, j)
            naive = oracles.naive_gaussian_lc_llr(inst.codes, inst.taps, inst.plan.path_sets, k, j,
                                                  r_tilde[k, j], lambda2, noise, threshold)
            fast = pulse_llr_gaussian_lc(desc, r_tilde[k, j], priors_of(desc, lambda2), noise,
                                         threshold_db=threshold, llr_clamp=1e9)
            assert abs(fast - naive) <= 1e-9
        part = inst.collisions.partition(threshold_db=threshold)
        batch = enumeration_stage(part, r_tilde, lambda2, noise, llr_clamp=1e9)
        for k, j in np.argwhere(inst.collisions.counts > 0)[:3]:
            naive = oracles.naive_gaussian_lc_llr(inst.codes, inst.taps, inst.plan.path_sets, k, j,
                                                  r_tilde[k, j], lambda2, noise, threshold)
            assert abs(batch[k, j] - naive) <= 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_infinite_threshold_is_exact(seed):
    inst, _, r_tilde, lambda2, noise = noisy_instance(seed)
    exact = enumeration_stage(inst.collisions, r_tilde, lambda2, noise)
    relaxed = enumeration_stage(inst.collisions.partition(threshold_db=np.inf), r_tilde, lambda2, noise)
    np.testing.assert_array_equal(exact, relaxed)
    for k, j in np.argwhere(inst.collisions.counts >= 0)[:5]:
        desc = inst.collisions.descriptor(k, j)
        p = priors_of(desc, lambda2)
        assert (pulse_llr_gaussian_lc(desc, r_tilde[k, j], p, noise, threshold_db=np.inf)
                == pulse_llr_exact(desc, r_tilde[k, j], p, noise))


@pytest.mark.parametrize("seed", range(10))
def test_all_weak_is_linear_gaussian(seed):
    inst, _, r_tilde, lambda2, noise = noisy_instance(seed)
    for k, j in np.argwhere(inst.collisions.counts > 0)[:5]:
        desc = inst.collisions.descriptor(k, j)
        interference = np.sum(desc.path_gains[:, None] ** 2 * desc.coefficients ** 2)
        variance = noise * desc.path_energy + interference
        expected = 2 * desc.amplitude * r_tilde[k, j] / variance
        got = pulse_llr_gaussian_lc(desc, r_tilde[k, j], priors_of(desc, lambda2), noise,
                                    threshold_db=-np.inf, llr_clamp=1e9)
        assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_sic_first_iteration_closed_form(seed):
    inst, r, r_tilde, _, noise = noisy_instance(seed)
    samples = r[inst.codes.positions[:, :, None] + inst.plan.path_sets[:, None, :] - 1]
    batch, _ = sic_stage(inst.collisions, r_tilde, np.zeros_like(r_tilde), noise, llr_clamp=1e9)
    for k, j in np.argwhere(inst.collisions.counts >= 0)[:6]:
        desc = inst.collisions.descriptor(k, j)
        per_path = np.sum(desc.coefficients ** 2, axis=1)
        expected = (4 * desc.amplitude * r_tilde[k, j]
                    / np.sum(desc.path_gains ** 2 * (noise + per_path)))
        scalar, _ = pulse_llr_sic(desc, samples[k, j], np.zeros(desc.num_interferers), noise,
                                  llr_clamp=1e9)
        assert scalar == pytest.approx(expected, rel=1e-10)
        assert batch[k, j] == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_sic_scalar_and_batch_agree(seed):
    inst, r, r_tilde, lambda2, noise = noisy_instance(seed)
    samples = r[inst.codes.positions[:, :, None] + inst.plan.path_sets[:, None, :] - 1]
    batch, _ = sic_stage(inst.collisions, r_tilde, lambda2, noise, llr_clamp=1e9)
    for k in range(inst.config.num_users):
        for j in range(inst.config.num_pulses):
            desc = inst.collisions.descriptor(k, j)
            scalar, _ = pulse_llr_sic(desc, samples[k, j], priors_of(desc, lambda2), noise,
                                      llr_clamp=1e9)
            assert batch[k, j] == pytest.approx(scalar, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_antisymmetry(seed):
    inst, r, r_tilde, lambda2, noise = noisy_instance(seed)
    coll = inst.collisions
    pairs = [
        (enumeration_stage(coll, r_tilde, lambda2, noise),
         enumeration_stage(coll, -r_tilde, -lambda2, noise)),
        (enumeration_stage(coll.partition(threshold_db=0.0), r_tilde, lambda2, noise),
         enumeration_stage(coll.partition(threshold_db=0.0), -r_tilde, -lambda2, noise)),
        (sic_stage(coll, r_tilde, lambda2, noise)[0], sic_stage(coll, -r_tilde, -lambda2, noise)[0]),
    ]
    for plus, minus in pairs:
        np.testing.assert_allclose(plus, -minus, atol=1e-9)


def test_capacity_limit():
    inst, r_tilde, _, noise, (k, j) = three_collider_pulse()
    desc = inst.collisions.descriptor(k, j)
    with pytest.raises(CapacityError):
        pulse_llr_exact(desc, 0.0, np.zeros(3), noise, max_exact_bits=2)
    with pytest.raises(CapacityError):
        run_iterative("exact", inst.collisions, r_tilde, noise,
                      DetectorConfig(mode="exact", max_exact_bits=2))


@pytest.mark.parametrize("seed", range(10))
def test_noiseless_enumeration_recovers_bits(seed):
    inst, _, _, lambda2, _ = noisy_instance(seed)
    clean = synthesize_noiseless(inst.config, inst.codes, inst.taps, inst.bits)
    r_tilde = mrc_combine(clean, inst.codes, inst.taps, inst.plan)
    llr = enumeration_stage(inst.collisions, r_tilde, lambda2, 0.0)
    truth = inst.bits.pulse_bits
    for k, j in np.argwhere(llr != 0):
        desc = inst.collisions.descriptor(k, j)
        assert pulse_llr_exact(desc, r_tilde[k, j], priors_of(desc, lambda2), 0.0) == llr[k, j]
    # a pulse is only undecided when both hypotheses explain the sample exactly
    assert np.all(np.sign(llr[llr != 0]) == truth[llr != 0])


# symbol stage and iteration -------------------------------------------------


def test_symbol_update_example():
    lambda2, total = symbol_update(np.array([1.0, 2.0, 3.0]), 3)
    np.testing.assert_array_equal(lambda2, [5, 4, 3])
    np.testing.assert_array_equal(total, [6, 6, 6])


def test_symbol_update_single_frame():
    lam = np.array([[0.5, -2.0]])
    lambda2, total = symbol_update(lam, 1)
    np.testing.assert_array_equal(lambda2, 0)
    np.testing.assert_array_equal(total, lam)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_symbol_update_identities(Nf, P, seed):
    lam = np.random.default_rng(seed).normal(size=(2, Nf * P))
    lambda2, total = symbol_update(lam, Nf)
    np.testing.assert_allclose(total, lam + lambda2)
    np.testing.assert_allclose(lambda2.reshape(2, P, Nf).sum(-1), (Nf - 1) * lam.reshape(2, P, Nf).sum(-1))


def test_constant_llrs():
    lambda2, _ = symbol_update(np.full(8, 1.5), 4)
    np.testing.assert_allclose(lambda2, 4.5)


def test_hard_decision_ties_go_positive():
    assert hard_decisions(np.array([[1.0, -1.0, 0.0, 0.0]]), 2).tolist() == [[1, 1]]


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31 - 1))
def test_decisions_invariant_to_positive_scaling(scale, seed):
    lam = np.random.default_rng(seed).normal(size=(3, 12))
    np.testing.assert_array_equal(hard_decisions(lam, 3), hard_decisions(scale * lam, 3))


@pytest.mark.parametrize("mode", ["exact", "gaussian_lc", "sic"])
def test_single_user_noiseless_is_error_free(mode):
    cfg = SystemConfig(1, 50, 4, 10, 6, 3)
    rng = make_rng(8)
    codes, bits = generate_codes(cfg, rng), generate_bits(cfg, rng)
    taps = rng.standard_normal((1, 6))
    plan = default_plan(1, 3)
    r_tilde = mrc_combine(synthesize_noiseless(cfg, codes, taps, bits), codes, taps, plan)
    coll = build_collisions(codes, taps, plan, cfg)
    result = run_iterative(mode, coll, r_tilde, 1e-3, iterations=1)
    np.testing.assert_array_equal(result.decisions[0], bits.bits)
    np.testing.assert_array_equal(mrc_rake_decide(r_tilde, codes), bits.bits)


def test_rake_matches_first_iteration_without_collisions():
    cfg = SystemConfig(1, 100, 5, 12, 5, 5, no_ifi=True)
    rng = make_rng(9)
    codes, bits = generate_codes(cfg, rng), generate_bits(cfg, rng)
    taps = rng.standard_normal((1, 5))
    plan = default_plan(1, 5)
    r = synthesize_noiseless(cfg, codes, taps, bits) + 2.0 * rng.standard_normal(cfg.num_samples)
    r_tilde = mrc_combine(r, codes, taps, plan)
    coll = build_collisions(codes, taps, plan, cfg)
    for mode in ("exact", "sic"):
        result = run_iterative(mode, coll, r_tilde, 4.0, iterations=1)
        np.testing.assert_array_equal(result.decisions[0], mrc_rake_decide(r_tilde, codes))


def test_trace_records_states():
    inst, _, r_tilde, _, noise = noisy_instance(3)
    result = run_iterative("exact", inst.collisions, r_tilde, noise, iterations=3, keep_trace=True)
    assert result.decisions.shape == (3, inst.config.num_users, inst.config.symbols_per_packet)
    assert [s.iteration for s in result.trace] == [1, 2, 3]
    for state in result.trace:
        assert np.all(np.isfinite(state.lambda1)) and np.all(np.abs(state.lambda2) <= 50)


def test_exact_agrees_with_joint_map():
    rng = make_rng(0, 30)
    # message passing on this loopy graph is not joint MAP; agreement drops at low SNR
    agree, trials = 0, 200
    for _ in range(trials):
        cfg = SystemConfig(2, 2, 2, 3, 2, 2)
        codes, bits = generate_codes(cfg, rng), generate_bits(cfg, rng)
        taps = rng.standard_normal((2, 2))
        plan = default_plan(2, 2)
        noise = 0.1
        r = synthesize_noiseless(cfg, codes, taps, bits) + math.sqrt(noise) * rng.standard_normal(cfg.num_samples)
        r_tilde = mrc_combine(r, codes, taps, plan)
        coll = build_collisions(codes, taps, plan, cfg)
        detected = run_iterative("exact", coll, r_tilde, noise, iterations=3).decisions[-1]
        reference = oracles.exhaustive_map(codes, taps, plan.path_sets, r_tilde, noise)
        agree += int(np.array_equal(detected, reference))
    assert agree >= 0.95 * trials


def test_detector_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(mode="zf")
    with pytest.raises(ValueError):
        DetectorConfig(llr_clamp=0)
