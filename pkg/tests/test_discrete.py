import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfic.discrete import (DiscreteChain, continuum_log_partition, overlap_identity_check,
                           replica_overlaps, scaling_limit_check, site_magnetizations,
                           transfer_ratio, write_csv)
from rfic.path import SampledPath, sample_bilateral


def brute(chain):
    """log Z, log Z_pure, <sigma_j> by enumerating all 2^N configurations."""
    N, J, f = chain.N, chain.J, chain.fields
    logw, logw0, spins = [], [], []
    for s in itertools.product([1, -1], repeat=N):
        if chain.pinned and s[-1] != 1:
            continue
        s = np.array(s)
        full = np.concatenate([[1], s])
        e_pair = J * np.sum(full[1:] * full[:-1])
        logw.append(e_pair + np.dot(f, s))
        logw0.append(e_pair)
        spins.append(s)
    logw, logw0, spins = np.array(logw), np.array(logw0), np.array(spins)
    lz = np.logaddexp.reduce(logw)
    p = np.exp(logw - lz)
    return lz, np.logaddexp.reduce(logw0), p @ spins


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.floats(0.0, 3.0), st.floats(-1.0, 1.0), st.floats(0.0, 2.0),
       st.integers(0, 2 ** 31 - 1), st.sampled_from(["plus-free", "plus-plus"]))
def test_against_enumeration(N, J, h, delta, seed, boundary):
    omega = np.random.default_rng(seed).standard_normal(N)
    c = DiscreteChain(N, J, h, delta, omega, boundary)
    lz, lz0, mag = brute(c)
    assert transfer_ratio(c) == pytest.approx(lz - lz0, abs=1e-10)
    assert transfer_ratio(c, backward=True) == pytest.approx(lz - lz0, abs=1e-10)
    np.testing.assert_allclose(site_magnetizations(c), mag, atol=1e-10)
    np.testing.assert_allclose(replica_overlaps(c), mag ** 2, atol=1e-10)


def test_single_site_closed_form():
    J, f = 0.7, 0.4
    c = DiscreteChain(1, J, f, 0.0, [0.0])
    z = math.exp(J + f) + math.exp(-J - f)
    z0 = math.exp(J) + math.exp(-J)
    assert transfer_ratio(c) == pytest.approx(math.log(z / z0), abs=1e-14)
    assert site_magnetizations(c)[0] == pytest.approx(math.tanh(J + f), abs=1e-14)


def test_zero_field_is_zero_ratio():
    c = DiscreteChain(200, 1.3, 0.0, 0.0, np.ones(200))
    assert transfer_ratio(c) == 0.0
    assert transfer_ratio(DiscreteChain(5, 1.0, 0.0, 0.0, np.ones(5), "plus-plus")) == 0.0


def test_large_coupling_no_overflow():
    rng = np.random.default_rng(0)
    om = rng.standard_normal(1000)
    c = DiscreteChain(1000, 400.0, 0.0, 1.0, om)
    # spins frozen to +1 by the boundary: log ratio -> sum of fields
    assert transfer_ratio(c) == pytest.approx(om.sum(), rel=1e-12)
    assert math.isfinite(transfer_ratio(DiscreteChain(1000, 400.0, 0.0, 50.0, om)))


def test_validation():
    with pytest.raises(ValueError):
        DiscreteChain(0, 1.0, 0.0, 0.0, [])
    with pytest.raises(ValueError):
        DiscreteChain(2, 1.0, 0.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        DiscreteChain(1, -1.0, 0.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        DiscreteChain(1, 1.0, 0.0, 0.0, [math.nan])
    with pytest.raises(ValueError):
        DiscreteChain(1, 1.0, 0.0, 0.0, [1.0], boundary="free-free")
    c = DiscreteChain(2, 1.0, 0.0, 0.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        c.omega[0] = 3.0


def test_single_site_overlap_by_gauss_hermite():
    # N = 1, h = 0: both sides in closed form, averaged over omega by Gauss-Hermite
    J, delta, step = 0.8, 0.5, 1e-3
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()

    def logz(lam):
        return np.log(np.cosh(J + lam * delta * x)) - math.log(math.cosh(J))

    lhs = np.dot(w, (logz(1 + step) - logz(1 - step)) / (2 * step))
    rhs = delta ** 2 * np.dot(w, 1 - np.tanh(J + delta * x) ** 2)
    assert lhs == pytest.approx(rhs, abs=1e-6)
    rep = overlap_identity_check(N=1, J=J, h=0.0, delta=delta, samples=20_000, seed=1)
    assert abs(rep.lhs - lhs) < 4 * rep.lhs_stderr
    assert abs(rep.rhs - rhs) < 4 * rep.rhs_stderr


def test_overlap_zero_disorder():
    rep = overlap_identity_check(N=10, J=1.0, h=0.2, delta=0.0, samples=4, seed=0)
    assert rep.lhs == pytest.approx(rep.rhs, abs=1e-6)      # central-difference error only


def test_overlap_small_run_and_determinism():
    a = overlap_identity_check(N=20, J=2.0, delta=0.3, samples=2000, seed=3)
    b = overlap_identity_check(N=20, J=2.0, delta=0.3, samples=2000, seed=3, workers=4)
    assert a.payload() == b.payload()
    assert a.z < 3.0


def test_continuum_log_partition_no_noise():
    # B = 0: log Z = -eps ell + eps int e^{-l} + log(1 + e^{-l_ell}), l from +inf
    g = 1.0
    p = SampledPath(np.zeros(20001), 1e-4)
    # without disorder the free-end partition function is a total probability
    assert continuum_log_partition(p, g) == pytest.approx(0.0, abs=1e-6)
    q = SampledPath(0.3 * np.arange(20001) * 1e-4, 1e-4)
    # a pure drift alpha*t tilts each spin path by alpha * int s dt; Jensen with
    # E s_t = e^{-2 eps t} > 0 gives a positive log Z below alpha * ell
    assert 0.0 < continuum_log_partition(q, g) < 0.3 * 2.0


def test_continuum_log_partition_is_mean_consistent():
    # s_t^2 = 1, so E exp(int s dB) = e^{ell/2} for every spin path, hence E Z = e^{ell/2}
    vals = [continuum_log_partition(sample_bilateral(s, 0.0, 1.0, 1e-3), 1.0) for s in range(400)]
    z = np.exp(vals)
    assert abs(z.mean() - math.exp(0.5)) < 4 * z.std(ddof=1) / math.sqrt(z.size)


def test_scaling_small_and_csv():
    rep = scaling_limit_check(deltas=(1e-1, 1e-2), samples=300, seed=2)
    assert [r.N for r in rep.rows] == [10, 100]
    assert rep.rows[1].gap < rep.rows[0].gap
    assert rep.monotone
    buf = io.StringIO()
    write_csv(rep, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "delta,mean_log_ratio,var_log_ratio,continuum_mean,continuum_var,gap"
    assert len(lines) == 3
    again = scaling_limit_check(deltas=(1e-1, 1e-2), samples=300, seed=2, workers=3)
    assert again.payload() == rep.payload()
    with pytest.raises(ValueError):
        scaling_limit_check(deltas=(1e-2, 3e-3))
