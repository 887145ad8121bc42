import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import kv, spence

from rfic.analytic import (EULER_GAMMA, AnalyticConfig, analytic_row, bessel_k, d_hat, d_m_exact,
                           d_m_expansion, disorder_energy, free_energy, free_energy_quadrature,
                           overlap_density, p_convolution, p_gamma, p_gamma_cdf, polylog2,
                           wall_density)

LOG2 = math.log(2.0)


def test_bessel_oracles():
    assert bessel_k(0, 1.0) == pytest.approx(0.42102443824, abs=1e-11)
    assert bessel_k(-1, 0.3) == bessel_k(1, 0.3)
    # small-argument asymptote: 2 K_0(e^-G) = 2G + 2(log 2 - gamma_E) + O(e^-2G)
    assert 2 * bessel_k(0, math.exp(-10.0)) == pytest.approx(20.2318630, abs=1e-6)


@pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.0, 3.7])
def test_bessel_against_scipy(nu):
    x = np.array([1e-8, 1e-3, 0.1, 1.0, 5.0, 40.0])
    np.testing.assert_allclose(bessel_k(nu, x), kv(nu, x), rtol=1e-12)


def test_bessel_errors():
    with pytest.raises(ValueError):
        bessel_k(0, 0.0)
    with pytest.raises(ValueError):
        bessel_k(0, np.nan)
    with pytest.raises(ValueError):
        AnalyticConfig(nodes=8)


def test_p_gamma_value_and_shape():
    assert p_gamma(10.0, 0.0) == pytest.approx(0.0494247, abs=1e-7)
    x = np.linspace(-30, 30, 61)
    np.testing.assert_array_equal(p_gamma(5.0, x), p_gamma(5.0, -x))
    for g in (1.0, 5.0):
        total, _ = integrate.quad(lambda y: p_gamma(g, y), -np.inf, np.inf, limit=400)
        assert total == pytest.approx(1.0, abs=1e-9)


def test_p_gamma_cdf():
    assert p_gamma_cdf(3.0, 0.0) == 0.5
    assert p_gamma_cdf(3.0, 200.0) == pytest.approx(1.0, abs=1e-13)
    for x in (-4.2, 0.7, 2.5):
        ref, _ = integrate.quad(lambda y: p_gamma(3.0, y), -np.inf, x, limit=400)
        assert p_gamma_cdf(3.0, x) == pytest.approx(ref, abs=1e-10)


def test_convolution_matches_direct():
    g = 5.0
    y = np.linspace(-g - 40, g + 40, 40001)
    dy = y[1] - y[0]
    py = p_gamma(g, y)
    for x in (0.0, 3.0, 9.5, -12.0):
        direct = integrate.trapezoid(py * p_gamma(g, x - y), dx=dy)
        assert abs(p_convolution(g, x) - direct) <= 1e-6
    total, _ = integrate.quad(lambda z: p_convolution(g, z), -np.inf, np.inf, limit=400)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_free_energy():
    assert free_energy(10.0) == pytest.approx(0.0988540, abs=1e-6)
    vals = [free_energy(g) for g in (1, 2, 5, 10, 20, 40)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 0.03
    for g in (5.0, 10.0, 20.0):
        lead = 1.0 / (g + LOG2 - EULER_GAMMA)
        assert abs(free_energy(g) - lead) < 10 * g * math.exp(-2 * g)
    # alpha shift and the Bessel ratio form
    eps = math.exp(-2.0)
    assert free_energy(2.0, 0.5) == pytest.approx(0.5 + eps * kv(-0.5, eps) / kv(0.5, eps), rel=1e-12)


@pytest.mark.parametrize("g", range(1, 21))
def test_free_energy_quadrature_identity(g):
    assert abs(free_energy_quadrature(g) - free_energy(g)) <= 1e-8


def test_wall_density():
    # d/dG of 1/(G + log2 - gamma_E) is exact up to O(e^-2G) at G = 10
    assert wall_density(10.0) == pytest.approx(0.0097721, abs=1e-7)
    gs = [2.0, 5.0, 10.0, 40.0, 160.0]
    assert all(wall_density(g) > 0 for g in gs)
    ratio = [wall_density(g) * g * g for g in gs]
    assert np.all(np.diff(np.abs(np.array(ratio) - 1.0)) < 0)
    assert ratio[-1] == pytest.approx(1.0, abs=0.01)


def test_disorder_energy():
    gs = [5.0, 10.0, 20.0, 100.0, 600.0]
    scaled = [g * disorder_energy(g) / 2 for g in gs]
    assert np.all(np.diff(scaled) > 0)
    assert scaled[-1] == pytest.approx(1.0, abs=0.01)
    for g in (1.0, 7.0):
        assert disorder_energy(g) == 2 * overlap_density(g)
        eps = math.exp(-g)
        k0, k1, k2 = kv(0, eps), kv(1, eps), kv(2, eps)
        assert disorder_energy(g) == pytest.approx(eps ** 2 * (k0 ** 2 + k2 * k0 - 2 * k1 ** 2) / k0 ** 2,
                                                   rel=1e-9)


def test_polylog2():
    # scipy's spence(z) = Li2(1 - z)
    for z in (-0.9, -0.1, 0.0, 0.3, 0.95):
        assert polylog2(z) == pytest.approx(float(spence(1 - z)), abs=1e-14)
    with pytest.raises(ValueError):
        polylog2(1.0)


def test_d_hat():
    assert d_hat(10.0) == pytest.approx(0.0652024, abs=1e-6)
    assert 1000 * d_hat(1000.0) == pytest.approx(LOG2, abs=1e-3)
    with pytest.raises(ValueError):
        d_hat(0.0)


@pytest.mark.parametrize("g", [1.0, 3.0, 10.0])
def test_d_hat_double_integral(g):
    # l, r independent uniform on [-G, G]; integrate over s = l + r with the triangle density
    f = lambda s: (2 * g - abs(s)) / (4 * g * g) / (1 + math.exp(abs(s)))  # noqa: E731
    val, _ = integrate.quad(f, 0, 2 * g, epsabs=1e-14, epsrel=1e-13, limit=200)
    assert abs(d_hat(g) - 2 * val) <= 1e-8


def test_d_m():
    assert d_m_expansion(10.0) == pytest.approx(0.0619965, abs=1e-7)
    r = (d_m_exact(10.0) - d_m_expansion(10.0)) / (d_m_exact(20.0) - d_m_expansion(20.0))
    assert r == pytest.approx(8.0, rel=0.25)
    # direct quadrature of the same integral with scipy's Bessel function
    g = 6.0
    eps = math.exp(-g)
    k0 = kv(0, eps)
    f = lambda x: kv(0, 2 * eps * math.cosh(x / 2)) / (2 * k0 * k0) / (1 + math.exp(abs(x)))  # noqa: E731
    ref = 2 * integrate.quad(f, 0, 60, limit=400, epsabs=1e-13)[0]
    assert d_m_exact(g) == pytest.approx(ref, abs=1e-10)
    assert g * d_m_exact(g) < LOG2


def test_analytic_row_keys():
    row = analytic_row(5.0)
    assert list(row) == ["gamma", "f0", "wall_density", "disorder_energy", "d_hat", "d_m_exact",
                         "d_m_expansion"]
    assert row["f0"] == free_energy(5.0)
