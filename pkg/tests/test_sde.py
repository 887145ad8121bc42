import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rfic.analytic import free_energy, p_gamma_cdf
from rfic.extrema import WindowExhausted, bilateral_extrema
from rfic.path import SampledPath, reverse, sample_bilateral
from rfic.sde import (contraction_excess, default_dt, deterministic_bounds, envelope_bounds,
                      envelope_curves, epsilon, integrate_l, integrate_linear_system, integrate_r,
                      magnetization, reflect_simplified, simplified_closed_form, write_csv)


def flat(n=201, dt=0.01, t0=0.0):
    return SampledPath.from_start(np.zeros(n), dt, t0=t0)


def test_defaults():
    assert epsilon(2.0) == math.exp(-2.0)
    assert default_dt(1.0) == pytest.approx(1e-3)
    assert default_dt(10.0) == 1e-2


def test_no_drift_limit():
    p = sample_bilateral(1, 0.0, 5.0, 0.01)
    l = integrate_l(p, math.inf, l0=0.7)
    np.testing.assert_allclose(l.values, 0.7 + 2.0 * p.values, atol=1e-12)


@pytest.mark.parametrize("x", [-3.0, 0.0, 0.4, 5.0])
def test_zero_noise_flow(x):
    g = 1.5
    p = flat()
    l = integrate_l(p, g, l0=x)
    t = p.times
    np.testing.assert_allclose(np.tanh(l.values / 2), np.exp(-2 * epsilon(g) * t) * math.tanh(x / 2),
                               atol=1e-14)


def test_zero_noise_from_infinity():
    g = 1.0
    p = flat()
    l = integrate_l(p, g)
    assert l.values[0] == math.inf
    t = p.times[1:]
    np.testing.assert_allclose(l.values[1:], 2 * np.arctanh(np.exp(-2 * epsilon(g) * t)), rtol=1e-12)
    assert np.all(np.isfinite(l.values[1:]))
    r = integrate_r(p, g)
    np.testing.assert_allclose(r.values[:-1], l.values[1:][::-1], rtol=1e-12)


def test_start_time_and_steps():
    p = sample_bilateral(2, -1.0, 1.0, 0.01)
    l = integrate_l(p, 1.0, a=0.0, l0=0.0, steps=10)
    assert l.values.size == 11 and l.times[0] == 0.0
    assert l.at(0.05) == l.values[5]
    with pytest.raises(ValueError):
        integrate_l(p, 1.0, a=0.5, steps=1000)
    with pytest.raises(ValueError):
        integrate_l(p, 1.0, l0=math.nan)


def test_integrate_r_is_mirrored_l():
    p = sample_bilateral(3, -2.0, 3.0, 0.01)
    r = integrate_r(p, 1.0, b=2.0, r0=0.3)
    q = reverse(p)
    q = q.with_values(-q.values)
    l = integrate_l(q, 1.0, a=-2.0, l0=0.3)
    np.testing.assert_array_equal(r.values, l.values[::-1])
    assert r.times[-1] == 2.0 and r.times[0] == p.t0


def test_r_law_is_p_gamma():
    g = 1.0
    x = []
    for s in range(600):
        p = sample_bilateral(s, 0.0, 20.0, 2e-3)
        x.append(integrate_r(p, g).values[0])
    x = np.array(x)
    assert stats.kstest(x, lambda y: p_gamma_cdf(g, y)).statistic < 1.63 / math.sqrt(x.size)


def test_magnetization_examples():
    p = flat(11)
    l = integrate_l(p, 1.0, l0=0.0)
    r = integrate_r(p, 1.0, r0=0.0)
    t, m, pu = magnetization(l, r)
    np.testing.assert_array_equal(m, 0.0)
    np.testing.assert_array_equal(pu, 0.5)
    big = integrate_l(p, 1.0, l0=800.0)
    _, m2, pu2 = magnetization(big, r)
    assert pu2[0] == 1.0
    q = sample_bilateral(0, 0.0, 2.0, 0.01)
    _, m3, p3 = magnetization(integrate_l(q, 1.0, l0=0.5), integrate_r(q, 1.0, r0=-0.2))
    np.testing.assert_allclose(p3 + 1 / (1 + np.exp(m3)), 1.0, atol=1e-15)


def test_csv_columns():
    q = sample_bilateral(0, 0.0, 1.0, 0.1)
    buf = io.StringIO()
    write_csv(integrate_l(q, 1.0), integrate_r(q, 1.0), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,l,r,m,p_up"
    assert len(lines) == 1 + 11
    assert lines[1].split(",")[1] == "inf"     # initial condition of l
    assert lines[-1].split(",")[2] == "inf"    # initial condition of r


def test_linear_system_matches_strang():
    p = sample_bilateral(4, 0.0, 50.0, 1e-4)
    ls = integrate_linear_system(p, 2.0)
    l = integrate_l(p, 2.0)
    diff = np.abs(ls.l_check[1:] - l.values[1:])
    assert diff.max() < 5e-3


def test_linear_system_no_disorder_energy():
    p = sample_bilateral(4, 0.0, 5.0, 1e-3)
    ls = integrate_linear_system(p, 60.0)
    assert np.max(np.abs(ls.log_x1)) < 1e-20


def test_linear_system_growth_rate():
    g = 2.0
    p = sample_bilateral(8, 0.0, 20_000.0, 1e-2)
    ls = integrate_linear_system(p, g)
    rate = ls.log_x1[-1] / p.t_end
    # pathwise: log X1 is the running integral of eps e^{-l}
    l = integrate_l(p, g)
    assert rate == pytest.approx(epsilon(g) * np.exp(-l.values[1:]).mean(), rel=2e-3)
    # long-time limit (path-to-path spread is about 2% at this length)
    assert rate == pytest.approx(free_energy(g), rel=0.05)


def test_reflect_examples():
    r = reflect_simplified(flat(), 1.5)
    np.testing.assert_array_equal(r.values, 1.5)
    down = SampledPath(-0.05 * np.arange(101), 0.01)      # 2 dB = -0.1 per step
    r = reflect_simplified(down, 1.0)
    np.testing.assert_allclose(r.values[:21], 1.0 - 0.1 * np.arange(21), atol=1e-12)
    np.testing.assert_array_equal(r.values[21:], -1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_simplified_closed_form_oracles(seed):
    g = 1.0
    p = sample_bilateral(seed, -40.0, 40.0, 1e-2)
    try:
        so = simplified_closed_form(p, g)
        _, label = bilateral_extrema(p, g)
    except WindowExhausted:
        return
    refl = reflect_simplified(p, g).at(0.0)
    assert so.l_hat == pytest.approx(refl, abs=1e-9)
    rr = reflect_simplified(reverse(p).with_values(-reverse(p).values), g)
    assert so.r_hat == pytest.approx(rr.at(0.0), abs=1e-9)
    assert so.sign == label
    assert -g <= so.l_hat <= g


def test_simplified_hand_example():
    # left of 0: rise of 2.5 > 1 back to the min at t=-2 (value -1)
    p = SampledPath.from_start([1.5, -1.0, 0.0, 0.8, -0.5], 1.0, t0=-2.0)
    so = simplified_closed_form(p, 1.0)
    assert so.l_hat == pytest.approx(-1.0 - 2.0 * (-1.0))
    assert so.r_hat == pytest.approx(-1.0 + 2.0 * 0.8)
    with pytest.raises(WindowExhausted):
        simplified_closed_form(SampledPath.from_start([0.1, 0.0, 0.1], 1.0, t0=-1.0), 1.0)


def test_envelope_no_drift():
    p = sample_bilateral(1, 0.0, 3.0, 0.01)
    lo, hi = envelope_curves(p, math.inf, 0.0, 0.5)
    np.testing.assert_allclose(lo, 0.5 + 2 * p.values[1:])
    np.testing.assert_allclose(hi, lo)


def test_envelope_infinite_start_no_noise():
    g = 2.0
    p = flat(101, 0.1)
    lo, hi = envelope_bounds(p, g, 0.0, math.inf, 5.0)
    assert lo == pytest.approx(-math.log(epsilon(g)) - math.log(5.0), rel=1e-12)
    assert hi >= lo
    with pytest.raises(ValueError):
        envelope_bounds(p, g, 1.0, 0.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.5, 1.0, 2.0]),
       st.sampled_from([-2.0, 0.0, 1.5, math.inf]))
def test_integrator_inside_envelope(seed, g, x):
    p = sample_bilateral(seed, 0.0, 10.0, 1e-3)
    l = integrate_l(p, g, l0=x)
    lo, hi = envelope_curves(p, g, 0.0, x)
    tol = 1e-6
    assert np.all(l.values[1:] >= lo - tol)
    assert np.all(l.values[1:] <= hi + tol)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(0.01, 5.0))
def test_deterministic_bounds(seed, T):
    p = sample_bilateral(seed, 0.0, 10.0, 1e-3)
    T = round(T / 1e-3) * 1e-3
    l = integrate_l(p, 1.0)
    lo, hi = deterministic_bounds(l, T)
    with pytest.raises(ValueError):
        deterministic_bounds(l, 0.0)
    vals = l.values[p.index_of(T):]
    assert np.all(vals >= lo - 1e-9) and np.all(vals <= hi + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3), st.floats(0.01, 4))
def test_flow_properties(seed, x, d):
    g = 1.0
    p = sample_bilateral(seed, 0.0, 10.0, 1e-3)
    l1 = integrate_l(p, g, l0=x)
    l2 = integrate_l(p, g, l0=x + d)
    assert np.all(l2.values >= l1.values)                       # monotone in l0
    assert contraction_excess(l1, l2) <= 1e-6                   # tanh contraction
    neg = integrate_l(p.with_values(-p.values), g, l0=-x)       # sign flip
    np.testing.assert_allclose(neg.values, -l1.values, atol=1e-12)


def test_upper_envelope_matches_direct_formula():
    # well-conditioned case: the increment recursion reproduces the direct formula
    g, x = 1.0, 0.4
    p = sample_bilateral(12, 0.0, 3.0, 1e-3)
    _, hi = envelope_curves(p, g, 0.0, x)
    eps = epsilon(g)
    b = p.values - p.values[0]

    def cumtrapz(y):
        return np.concatenate([[0.0], np.cumsum(0.5 * p.dt * (y[1:] + y[:-1]))])

    inner = cumtrapz(np.exp(2 * b)) * np.exp(-2 * b)
    theta = x + 2 * b + eps * np.exp(-x) * cumtrapz(np.exp(-2 * b)) + eps ** 2 * cumtrapz(inner)
    direct = theta - np.log1p(eps * cumtrapz(np.exp(theta)))
    np.testing.assert_allclose(hi, direct[1:], atol=1e-10)


def test_upper_envelope_far_excursion():
    # B drifts about 20 below its start: theta reaches ~1e17, the bound must stay valid
    p = sample_bilateral(5090, 0.0, 40.0, 1e-3)
    x = -0.5106688806270117
    l = integrate_l(p, 2.0, l0=x)
    lo, hi = envelope_curves(p, 2.0, 0.0, x)
    assert np.all(np.isfinite(hi))
    assert np.all(l.values[1:] <= hi + 1e-6) and np.all(l.values[1:] >= lo - 1e-6)
