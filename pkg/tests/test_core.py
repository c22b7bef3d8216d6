import math

import numpy as np
import pytest

from grwlab.core import (HBAR_SI, NATURAL, SI, CollapseParams, ConfigError,
                         ScaleSet, UnitError, UnitSystem, WavepacketParams,
                         effective_rate, from_natural, natural_scales,
                         params_from_config, read_config, to_natural,
                         unit_system)


def test_unit_systems():
    assert SI.hbar == 1.054571817e-34
    assert NATURAL.hbar == 1.0
    assert unit_system("si") is SI
    assert unit_system("natural") is NATURAL
    with pytest.raises(UnitError):
        unit_system("cgs")
    with pytest.raises(UnitError):
        UnitSystem("natural", 2.0)
    with pytest.raises(UnitError):
        UnitSystem("si", -1.0)


def test_collapse_params_validation():
    cp = CollapseParams(lam=1e-16, r_c=1e-7)
    assert cp.alpha() == pytest.approx(1e14, rel=1e-14)
    with pytest.raises(ValueError):
        CollapseParams(lam=-1.0, r_c=1e-7)
    with pytest.raises(ValueError):
        CollapseParams(lam=1.0, r_c=0.0)


def test_alpha_roundtrip_consistency():
    rng = np.random.default_rng(0)
    for _ in range(50):
        alpha = 10.0 ** rng.uniform(-8, 16)
        cp = CollapseParams.from_alpha(alpha, lam=1.0)
        assert cp.alpha() * cp.r_c ** 2 == pytest.approx(1.0, rel=1e-15)
        assert cp.r_c == pytest.approx(1.0 / math.sqrt(alpha), rel=1e-15)


def test_wavepacket_validation():
    with pytest.raises(ValueError):
        WavepacketParams(mass=0.0, dq0=1.0)
    with pytest.raises(ValueError):
        WavepacketParams(mass=1.0, dq0=-1.0)
    with pytest.raises(ValueError):
        WavepacketParams(mass=1.0, dq0=1.0, n_particles=0)
    wp = WavepacketParams(mass=1.0, dq0=1.0, n_particles=3)
    assert effective_rate(wp, CollapseParams(lam=2.0, r_c=1.0)) == 6.0


def test_natural_scales_make_hbar_mass_one():
    wp = WavepacketParams(mass=3.3e-27, dq0=1e-10)
    scales = natural_scales(wp)
    assert wp.mass / scales.mass == pytest.approx(1.0, rel=1e-14)
    # hbar in scale units: HBAR / (mass * length^2 / time)
    hbar_scaled = HBAR_SI * scales.time / (scales.mass * scales.length ** 2)
    assert hbar_scaled == pytest.approx(1.0, rel=1e-14)


def test_to_natural_roundtrip():
    cp = CollapseParams(lam=1e-16, r_c=1e-7)
    wp = WavepacketParams(mass=3.35e-27, dq0=1e-10, q0=2e-9, p0=4e-24)
    scales = natural_scales(wp)
    cp_n, wp_n = to_natural(cp, wp, scales)
    assert wp_n.mass == pytest.approx(1.0, rel=1e-14)
    cp_b, wp_b = from_natural(cp_n, wp_n, scales)
    for a, b in ((cp.lam, cp_b.lam), (cp.r_c, cp_b.r_c), (wp.mass, wp_b.mass),
                 (wp.dq0, wp_b.dq0), (wp.q0, wp_b.q0), (wp.p0, wp_b.p0)):
        assert b == pytest.approx(a, rel=1e-12)


def test_to_natural_zero_rate_and_identity():
    cp = CollapseParams(lam=0.0, r_c=1.0)
    wp = WavepacketParams(mass=1.0, dq0=1.0)
    cp_n, _ = to_natural(cp, wp, ScaleSet(length=3.0, time=7.0, hbar=1.0))
    assert cp_n.lam == 0.0
    identity = ScaleSet(length=1.0, time=1.0, hbar=1.0)
    cp_n, wp_n = to_natural(cp, wp, identity)
    assert (cp_n, wp_n) == (cp, wp)


def test_scale_validation():
    with pytest.raises(UnitError):
        ScaleSet(length=-1.0, time=1.0)
    with pytest.raises(UnitError):
        ScaleSet(length=1.0, time=0.0)
    with pytest.raises(UnitError):
        natural_scales(WavepacketParams(mass=1.0, dq0=1.0), length=0.0)


def test_read_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("""
# hydrogen-like run
lambda = 1e-16
r_c = 1e-7   # meters
mass = 3.345e-27
dq0 = 1e-10
n_particles = 2
units = si
""")
    raw = read_config(path)
    cp, wp, units = params_from_config(raw)
    assert cp.lam == 1e-16 and cp.r_c == 1e-7
    assert wp.n_particles == 2
    assert units is SI


def test_read_config_rejects_unknown_and_malformed(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("lambda 1e-16\n")
    with pytest.raises(ConfigError, match="line 1"):
        read_config(bad)
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text("lambda = 1\nfrequency = 2\n")
    with pytest.raises(ConfigError, match="unknown key"):
        read_config(unknown, allowed=frozenset({"lambda"}))
    dup = tmp_path / "dup.cfg"
    dup.write_text("lambda = 1\nlambda = 2\n")
    with pytest.raises(ConfigError, match="duplicate"):
        read_config(dup)


def test_params_from_config_defaults_are_hydrogen_like():
    cp, wp, units = params_from_config({})
    assert cp.r_c == 1e-7
    assert wp.dq0 ** 2 == pytest.approx(1e-20, rel=1e-12)
    assert units is SI
