import numpy as np
import pytest

from uwbmud.channel import (CIRFormatError, ChannelRealization, ClusterRayParams, fit_taps,
                            generate_cir, load_cir, preset)
from uwbmud.model import ConfigurationError, make_rng


@pytest.mark.parametrize("name", ["cm1-like", "cm3-like"])
def test_generated_taps_have_unit_energy(name):
    for seed in range(10):
        ch = generate_cir(preset(name, 25), make_rng(seed))
        assert ch.taps.shape == (1, 25)
        assert abs(np.sum(ch.taps ** 2) - 1.0) < 1e-12
        assert 0 < ch.captured_energy[0] <= 1


def test_fast_decay_concentrates_energy_in_first_tap():
    params = ClusterRayParams(0.0233, 2.5, 1e-3, 1e-3, 10)
    for seed in range(20):
        assert generate_cir(params, make_rng(seed)).taps[0, 0] ** 2 > 0.99


def test_cm1_captures_more_energy_early_than_cm3():
    def early(name):
        out = []
        for seed in range(100):
            ch = generate_cir(preset(name, 60), make_rng(seed, 7))
            out.append(np.sum(ch.taps[0, :10] ** 2))
        return np.mean(out)
    assert early("cm1-like") > early("cm3-like")


def test_truncation_energy_grows_with_taps():
    captured = [generate_cir(preset("cm3-like", L), make_rng(3)).captured_energy[0]
                for L in (5, 10, 25, 50)]
    assert np.all(np.diff(captured) >= 0)


def test_generation_is_deterministic():
    a = generate_cir(preset("cm1-like", 25), make_rng(11))
    b = generate_cir(preset("cm1-like", 25), make_rng(11))
    np.testing.assert_array_equal(a.taps, b.taps)


def test_bad_parameters_raise():
    with pytest.raises(ConfigurationError):
        ClusterRayParams(0.0, 2.5, 7.1, 4.3, 25)
    with pytest.raises(ConfigurationError):
        preset("cm9", 25)


def test_load_single_tap(tmp_path):
    path = tmp_path / "h.txt"
    path.write_text("1.0\n")
    np.testing.assert_array_equal(load_cir(path).taps, [[1.0]])


def test_load_normalizes(tmp_path):
    path = tmp_path / "h.txt"
    path.write_text("3.0\n4.0\n")
    np.testing.assert_allclose(load_cir(path).taps, [[0.6, 0.8]])


def test_load_skips_comments(tmp_path):
    path = tmp_path / "h.txt"
    path.write_text("# header\n3.0\n# middle\n\n4.0\n")
    np.testing.assert_allclose(load_cir(path).taps, [[0.6, 0.8]])


@pytest.mark.parametrize("text", ["", "# only\n", "1.0\nabc\n", "nan\n", "0\n0\n"])
def test_load_rejects_bad_files(tmp_path, text):
    path = tmp_path / "h.txt"
    path.write_text(text)
    with pytest.raises(CIRFormatError):
        load_cir(path)


def test_fit_taps_pads_and_truncates(tmp_path):
    ch = ChannelRealization(np.array([[3.0, 4.0, 0.0, 12.0]]))
    short = fit_taps(ch, 2)
    np.testing.assert_allclose(short.taps, [[0.6, 0.8]])
    np.testing.assert_allclose(short.captured_energy, [25 / 169])
    long = fit_taps(ch, 6)
    assert long.taps.shape == (1, 6)
    np.testing.assert_allclose(np.sum(long.taps ** 2), 1.0)


def test_stack_applies_power_offsets():
    users = [ChannelRealization(np.array([1.0, 0.0])) for _ in range(3)]
    ch = ChannelRealization.stack(users, [0.0, 20.0, -20.0])
    np.testing.assert_allclose(ch.effective_taps[:, 0], [1.0, 10.0, 0.1])
    np.testing.assert_allclose(ch.subset([1]).effective_taps, [[10.0, 0.0]])
