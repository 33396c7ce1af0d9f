import numpy as np
import pytest
from scipy.integrate import quad

from dualporo import constitutive as law
from dualporo.errors import DomainError

N_SAMPLES = 1000


def _samples(rng):
    # interior saturations, bounded away from the singular endpoint
    return np.sort(rng.uniform(1e-6, 1.0, N_SAMPLES))


def test_capillary_pressure_monotone_decreasing(rock_f, rng):
    s = _samples(rng)
    p = law.pc(rock_f, s)
    assert np.all(np.diff(p) < 0.0)
    assert law.pc(rock_f, 1.0) == 0.0


def test_mobility_monotonicity_and_floor(rock_f, rng):
    s = _samples(rng)
    lam_w, lam_n, lam_tot = law.mobilities(rock_f, s)
    assert np.all(np.diff(lam_w) > 0.0)
    assert np.all(np.diff(lam_n) < 0.0)
    # total mobility floor for the quadratic default law
    assert np.all(lam_tot >= 0.5 - 1e-15)
    assert np.isclose(min(law.mobilities(rock_f, np.linspace(0, 1, 10001))[2].min(), 1.0), 0.5)


def test_capillary_inverse_roundtrip(rock_f, rock_m, rng):
    s = _samples(rng)
    for rock in (rock_f, rock_m):
        p = law.pc(rock, s)
        back = law.pc_inverse(rock, p)
        assert np.max(np.abs(back - s)) < 1e-12


def test_kirchhoff_monotone_and_roundtrip(rock_f, rng):
    s = _samples(rng)
    th = law.beta(rock_f, s)
    assert np.all(np.diff(th) >= 0.0)
    back = law.beta_inverse(rock_f, th)
    assert np.max(np.abs(back - s)) < 1e-7


def test_theta_star_against_quadrature(rock_f):
    val, err = quad(lambda x: law.alpha(rock_f, x), 0.0, 1.0, limit=200)
    assert err < 1e-10
    assert abs(law.theta_star(rock_f) - val) < 1e-8


def test_matching_identity_for_equal_entry_pressure(rng):
    a = law.RockParams("fracture", phi=0.2, k=1.0, a=1.5)
    b = law.RockParams("matrix", phi=0.3, k=0.1, a=1.5)
    sys_eq = law.TwoRockSystem(fracture=a, matrix=b)
    s = rng.uniform(1e-6, 1.0, N_SAMPLES)
    assert np.max(np.abs(law.matching_P(sys_eq, s) - s)) < 1e-12


def test_matching_consistency_equal_capillary_pressure(system, rng):
    s_f = rng.uniform(1e-4, 1.0 - 1e-12, N_SAMPLES)
    s_m = law.matching_P(system, s_f)
    p_f = law.pc(system.fracture, s_f)
    p_m = law.pc(system.matrix, s_m)
    assert np.max(np.abs(p_f - p_m) / np.maximum(np.abs(p_f), 1.0)) < 1e-10


def test_matching_monotone(system, rng):
    s = _samples(rng)
    m = law.matching_P(system, s)
    assert np.all(np.diff(m) >= 0.0)
    assert np.all((0.0 <= m) & (m <= 1.0))


def test_alpha_nonnegative_and_vanishes_at_endpoints(rock_f):
    s = np.linspace(0.0, 1.0, 1001)
    a = law.alpha(rock_f, s)
    assert np.all(a >= 0.0)
    assert a[0] < 1e-8 and a[-1] < 1e-12


def test_phase_pressure_split_difference_is_capillary(rock_f, rng):
    for s in rng.uniform(0.05, 0.999, 25):
        p_w, p_n = law.global_pressure_split(rock_f, s, p_global=2.0)
        assert abs((p_n - p_w) - law.pc(rock_f, s)) < 1e-9


def test_phase_pressure_split_weighted_mean_is_global(rock_f, rng):
    # lam_w*dPw/ds + lam_n*dPn/ds = 0 at fixed global pressure, so the
    # mobility-weighted combination of phase gradients reduces to the
    # global-pressure gradient
    for s in rng.uniform(0.1, 0.95, 10):
        h = 1e-6
        lam_w, lam_n, lam = law.mobilities(rock_f, s)
        pw0, pn0 = law.global_pressure_split(rock_f, s - h, 0.0)
        pw1, pn1 = law.global_pressure_split(rock_f, s + h, 0.0)
        combo = lam_w * (pw1 - pw0) / (2 * h) + lam_n * (pn1 - pn0) / (2 * h)
        assert abs(combo) < 1e-5 * lam


def test_saturation_domain_errors(rock_f):
    with pytest.raises(DomainError):
        law.pc(rock_f, -0.1)
    with pytest.raises(DomainError):
        law.beta(rock_f, 1.5)
    with pytest.raises(DomainError):
        law.beta_inverse(rock_f, law.theta_star(rock_f) * 1.1)


def test_pluggable_law_exponents():
    curves = law.power_law(1.0, exp_w=3.0, exp_n=2.0)
    rock = law.RockParams("fracture", phi=0.2, k=1.0, a=1.0, law=curves)
    s = np.linspace(0.01, 0.99, 99)
    assert np.allclose(curves.lam_w(s), s**3)
    th = law.beta(rock, s)
    assert np.all(np.diff(th) > 0.0)
