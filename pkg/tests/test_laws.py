import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from specflow.laws import (
    LimitLaw, StandardMarchenkoPastur, beta_mp_G, beta_mp_edges, invert_to_density, mp_edges,
    mp_G, semicircle_G,
)


# independent oracles: textbook densities and Stieltjes integrals by quadrature
def semicircle_density(x, t=1.0):
    return np.sqrt(max(4 * t - x * x, 0.0)) / (2 * np.pi * t)


def mp_density(x, t, c):
    a, b = t * (np.sqrt(c) - 1) ** 2, t * (np.sqrt(c) + 1) ** 2
    return np.sqrt(max((b - x) * (x - a), 0.0)) / (2 * np.pi * t * x), a, b


def stieltjes_quad(dens, lo, hi, z):
    kw = dict(epsabs=1e-13, epsrel=1e-13, limit=400)
    re = integrate.quad(lambda x: (dens(x) / (z - x)).real, lo, hi, **kw)[0]
    im = integrate.quad(lambda x: (dens(x) / (z - x)).imag, lo, hi, **kw)[0]
    return complex(re, im)


def z_grid(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-6, 10, n) + 1j * rng.uniform(1e-3, 6, n)


# values frozen from stieltjes_quad (see test_frozen_values_match_quadrature)
SEMI_2I = -0.41421356237309476j
SEMI_3 = 0.3819660112501051
MP_MINUS1 = -0.6180339887499274
BETA2_4I = -0.06800491237851725 - 0.19653784443935557j


def test_frozen_values_match_quadrature():
    assert stieltjes_quad(semicircle_density, -2, 2, 2j) == pytest.approx(SEMI_2I, abs=1e-12)
    assert stieltjes_quad(semicircle_density, -2, 2, 3 + 1e-12j).real == pytest.approx(SEMI_3, abs=1e-12)
    f = lambda x: mp_density(x, 1.0, 1.0)[0]  # noqa: E731
    assert stieltjes_quad(f, 0.0, 4.0, -1 + 1e-12j).real == pytest.approx(MP_MINUS1, abs=1e-10)
    # beta = 2, c = 1: standard MP with ratio 1 and scale 2
    s = 2.0
    g = lambda x: np.sqrt(max((4 * s - x) * x, 0.0)) / (2 * np.pi * s * x)  # noqa: E731
    assert stieltjes_quad(g, 0, 4 * s, 4j) == pytest.approx(BETA2_4I, abs=1e-12)


def test_semicircle_examples():
    assert semicircle_G(2j, 1.0) == pytest.approx(SEMI_2I, abs=1e-14)
    assert semicircle_G(2j, 1.0) == pytest.approx(-0.414214j, abs=1e-6)
    assert semicircle_G(3 + 1e-12j, 1.0) == pytest.approx(SEMI_3, abs=1e-11)
    assert semicircle_G(3 + 1e-12j, 1.0).real == pytest.approx((3 - np.sqrt(5)) / 2, abs=1e-12)


def test_mp_examples():
    g = mp_G(-1 + 1e-12j, 1.0, 1.0)
    assert g.real == pytest.approx(MP_MINUS1, abs=1e-10)
    assert g.real == pytest.approx(-(np.sqrt(5) - 1) / 2, abs=1e-10)


def test_beta_mp_example():
    assert beta_mp_G(4j, 1.0, 1.0, 2.0) == pytest.approx(BETA2_4I, abs=1e-14)


def test_semicircle_quadratic():
    z = z_grid()
    for t in (0.25, 1.0, 3.0):
        g = semicircle_G(z, t)
        assert np.max(np.abs(t * g * g - z * g + 1)) <= 1e-12


@pytest.mark.parametrize("c", [1.0, 2.0, 4.0])
def test_mp_quadratic(c):
    z = z_grid()
    g = mp_G(z, 1.0, c)
    assert np.max(np.abs(z * g * g + (c - 1 - z) * g + 1)) <= 1e-12


def test_scaling_identities():
    z = z_grid(seed=3)
    for t in (0.1, 0.7, 2.5):
        for c in (1.0, 2.0, 4.0):
            assert np.max(np.abs(mp_G(z, t, c) - mp_G(z / t, 1.0, c) / t)) <= 1e-13
        s = np.sqrt(t)
        assert np.max(np.abs(semicircle_G(z, t) - semicircle_G(z / s, 1.0) / s)) <= 1e-13


def test_beta_one_equals_mp():
    rng = np.random.default_rng(4)
    z = rng.uniform(-5, 10, 1000) + 1j * rng.uniform(1e-3, 5, 1000)
    t = rng.uniform(0.1, 3, 1000)
    c = rng.uniform(1, 5, 1000)
    a = np.array([beta_mp_G(zz, tt, cc, 1.0) for zz, tt, cc in zip(z, t, c)])
    b = np.array([mp_G(zz, tt, cc) for zz, tt, cc in zip(z, t, c)])
    assert np.max(np.abs(a - b)) <= 1e-14


@pytest.mark.parametrize("law", [LimitLaw.semicircle(), LimitLaw.marchenko_pastur(2.0),
                                 LimitLaw.beta_marchenko_pastur(2.0, 2.0),
                                 LimitLaw.beta_marchenko_pastur(0.5, 3.0)])
def test_asymptotics(law):
    for y in (1e2, 1e3, 1e4):
        z = 1j * y
        assert abs(z * law.G(z, 1.0) - 1) <= 20.0 / y


@settings(max_examples=300, deadline=None)
@given(x=st.floats(-20, 20), y=st.floats(1e-8, 1e3), t=st.floats(0.05, 5), c=st.floats(1, 6),
       beta=st.floats(0.2, 4))
def test_herglotz(x, y, t, c, beta):
    z = complex(x, y)
    for g in (semicircle_G(z, t), mp_G(z, t, c), beta_mp_G(z, t, c, beta)):
        assert g.imag < 0 or (g.imag == 0 and y < 1e-6)
    # lower half plane by conjugation
    assert semicircle_G(z.conjugate(), t) == pytest.approx(np.conj(semicircle_G(z, t)), abs=1e-14)


@pytest.mark.parametrize("x0", [-3.0, -1.0, 0.0, 0.5, 2.0, 5.83, 7.0])
def test_branch_continuity(x0):
    y = np.geomspace(1e-6, 10, 4000)
    for law in (LimitLaw.semicircle(), LimitLaw.marchenko_pastur(2.0), LimitLaw.beta_marchenko_pastur(2.0, 2.0)):
        g = law.G(x0 + 1j * y, 1.0)
        jumps = np.abs(np.diff(g))
        # derivative scale |dG/dz| estimate times the step
        dg = np.abs(law.G(x0 + 1j * y[1:] + 1e-7, 1.0) - law.G(x0 + 1j * y[1:] - 1e-7, 1.0)) / 2e-7
        slope_bound = 10 * np.maximum(dg, 1e-3) * np.diff(y) + 1e-12
        assert np.all(jumps <= slope_bound + 1e-6 * np.abs(g[1:]))


def test_invert_to_density_examples():
    law = LimitLaw.semicircle()
    assert invert_to_density(law, 1.0, [0.0], 1e-6)[0] == pytest.approx(1 / np.pi, abs=1e-6)
    assert invert_to_density(law, 1.0, [3.0], 1e-6)[0] == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        invert_to_density(law, 1.0, [0.0], 0.0)


def test_mp_edges_and_normalisation():
    lo, hi = mp_edges(1.0, 2.0)
    assert (lo, hi) == pytest.approx(((np.sqrt(2) - 1) ** 2, (np.sqrt(2) + 1) ** 2), abs=1e-14)
    # edges are where the discriminant (z + t(1-c))^2 - 4tz vanishes
    for e in (lo, hi):
        assert (e - 1.0) ** 2 - 4 * e == pytest.approx(0, abs=1e-12)
    law = LimitLaw.marchenko_pastur(2.0)
    mass, _ = integrate.quad(lambda x: invert_to_density(law, 1.0, [x], 1e-8)[0], lo, hi, limit=200)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_density_matches_textbook():
    x = np.linspace(0.01, 6.5, 300)
    law = LimitLaw.marchenko_pastur(2.0)
    ref = np.array([mp_density(v, 1.0, 2.0)[0] for v in x])
    assert np.max(np.abs(law.density(x, 1.0) - ref)) <= 1e-12
    xs = np.linspace(-2.5, 2.5, 300)
    ref = np.array([semicircle_density(v) for v in xs])
    assert np.max(np.abs(LimitLaw.semicircle().density(xs) - ref)) <= 1e-12


@pytest.mark.parametrize("law", [LimitLaw.semicircle(), LimitLaw.marchenko_pastur(2.0),
                                 LimitLaw.beta_marchenko_pastur(2.0, 2.0)])
def test_round_trip_inversion(law):
    lo, hi = law.support(1.0)
    for z in (0.3 + 0.1j, lo - 0.5 + 0.4j, hi + 0.2j, 0.5 * (lo + hi) + 1j):
        dens = lambda x: invert_to_density(law, 1.0, [x], 1e-9)[0]  # noqa: E731
        assert stieltjes_quad(dens, lo, hi, z) == pytest.approx(law.G(z, 1.0), abs=1e-4)


def test_cdf_properties():
    semi = LimitLaw.semicircle()
    assert semi.cdf(0.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert semi.cdf(-2.0) == 0.0 and semi.cdf(2.0) == 1.0
    x = np.linspace(-2.5, 2.5, 51)
    assert np.all(np.diff(semi.cdf(x)) >= 0)
    mp = LimitLaw.marchenko_pastur(2.0)
    # closed-form CDF of the radius-2 semicircle at 1
    exact = 0.5 + (1 * np.sqrt(3) / 4 + np.arcsin(0.5)) / np.pi
    assert semi.cdf(1.0) == pytest.approx(exact, abs=1e-10)
    assert mp.cdf(mp.support()[1] - 1e-9) == pytest.approx(1.0, abs=1e-8)


def test_beta_mp_by_standard_mp_route():
    for c, beta, t in [(2.0, 2.0, 1.0), (1.0, 2.0, 1.0), (3.0, 0.5, 0.7)]:
        law = LimitLaw.beta_marchenko_pastur(c, beta)
        std = StandardMarchenkoPastur.from_beta_laguerre(c, beta, t)
        lo, hi = law.support(t)
        assert std.support() == pytest.approx((lo, hi), abs=1e-12)
        x = np.linspace(lo, hi, 203)[1:-1]
        assert np.max(np.abs(law.density(x, t) - std.density(x))) <= 1e-12
        assert std.cdf(0.5 * (lo + hi)) == pytest.approx(law.cdf(0.5 * (lo + hi), t), abs=1e-9)
    assert beta_mp_edges(1.0, 2.0, 1.0) == pytest.approx(mp_edges(1.0, 2.0), abs=1e-14)


def test_law_validation_and_sampling():
    with pytest.raises(ValueError):
        LimitLaw.marchenko_pastur(0.5)
    with pytest.raises(ValueError):
        LimitLaw.beta_marchenko_pastur(2.0, 0.0)
    rng = np.random.default_rng(5)
    s = LimitLaw.semicircle().sample(200000, 1.0, rng)
    assert np.mean(s**2) == pytest.approx(1.0, abs=0.01)
    m = LimitLaw.marchenko_pastur(2.0).sample(200000, 1.0, rng)
    # first two MP moments: t c and t^2 (c^2 + c)
    assert np.mean(m) == pytest.approx(2.0, abs=0.02)
    assert np.mean(m**2) == pytest.approx(6.0, abs=0.1)


@pytest.mark.parametrize("law", [LimitLaw.semicircle(), LimitLaw.marchenko_pastur(1.0),
                                 LimitLaw.marchenko_pastur(2.0), LimitLaw.beta_marchenko_pastur(2.0, 2.0)])
def test_cdf_rule_matches_adaptive_quadrature(law):
    lo, hi = law.support(0.8)
    x = np.concatenate([np.linspace(lo - 0.1, hi + 0.1, 301), lo + np.geomspace(1e-12, 1e-2, 20),
                        hi - np.geomspace(1e-12, 1e-2, 20)])
    assert np.max(np.abs(law.cdf(x, 0.8) - law.cdf_adaptive(x, 0.8))) <= 1e-12


def test_cdf_ratio_one_closed_form():
    # MP with c = 1: x = 4 sin^2(phi) gives F = (2/pi)(phi + sin(phi) cos(phi))
    x = np.concatenate([np.geomspace(1e-14, 1e-2, 40), np.linspace(0.01, 3.99, 200)])
    phi = np.arcsin(np.sqrt(x / 4))
    exact = 2 / np.pi * (phi + np.sin(phi) * np.cos(phi))
    assert np.max(np.abs(LimitLaw.marchenko_pastur(1.0).cdf(x) - exact)) <= 1e-13
