"""Discrete random field Ising chain by transfer matrices.

The chain has spins ``sigma_1..sigma_N``, boundary spin ``sigma_0 = +1``,
coupling ``J`` and site fields ``h + delta * omega_j``. Every matrix is
written relative to ``e^J``, i.e. as ``[[1, e^{-2J}], [e^{-2J}, 1]]``.
The pure partition function is then just the same product with zero
fields, and ratios never overflow even when ``J`` is large.

Besides the partition function ratio this module provides:

* the comparison of the ratio's moments with the continuum free-volume
  partition function, under the scaling ``N = ell/Delta``,
  ``delta = sqrt(Delta)``, ``h = alpha*Delta``,
  ``J = gamma/2 - log(Delta)/2``;
* the Gaussian integration-by-parts identity linking the
  ``lambda``-derivative of the quenched free energy to the overlap of two
  replicas.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence, TextIO

import numba
import numpy as np

from . import __version__
from .mc import _run, config_digest
from .path import SampledPath, rng_stream
from .sde import epsilon, integrate_l

__all__ = [
    "DiscreteChain", "transfer_ratio", "site_magnetizations", "replica_overlaps",
    "continuum_log_partition", "ScalingRow", "ScalingReport", "scaling_limit_check",
    "OverlapReport", "overlap_identity_check", "write_csv",
]

BOUNDARIES = ("plus-free", "plus-plus")
NS_SCALING, NS_OVERLAP = 20, 21


@dataclass(frozen=True, eq=False)
class DiscreteChain:
    """One disorder realization of the chain.

    Parameters
    ----------
    N : int
        Number of free spins.
    J : float
        Coupling, ``J >= 0``.
    h : float
        Homogeneous field.
    delta : float
        Disorder strength, ``delta >= 0``.
    omega : array_like
        Disorder values ``omega_1..omega_N``.
    boundary : {"plus-free", "plus-plus"}
        ``sigma_0 = +1`` always; the right end is free or pinned to ``+1``.
    """

    N: int
    J: float
    h: float
    delta: float
    omega: np.ndarray
    boundary: str = "plus-free"

    def __post_init__(self):
        w = np.array(self.omega, dtype=float, copy=True).reshape(-1)
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if w.size != int(self.N):
            raise ValueError("omega must hold exactly N values")
        for name in ("J", "h", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.J < 0 or self.delta < 0:
            raise ValueError("J and delta must be non-negative")
        if not np.all(np.isfinite(w)):
            raise ValueError("omega must be finite")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        w.setflags(write=False)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "N", int(self.N))

    @property
    def fields(self) -> np.ndarray:
        return self.h + self.delta * self.omega

    @property
    def pinned(self) -> bool:
        return self.boundary == "plus-plus"


# ---------------------------------------------------------------------------
# kernels (states: 0 = spin +1, 1 = spin -1)


@numba.njit(cache=True, nogil=True)
def _log_z_forward(f, eps, pinned):
    """log of ``e^{-JN} Z``, left to right with per-step renormalization."""
    p, m = 1.0, 0.0          # weights of sigma_{j-1} = +1 / -1 (sum 1)
    acc = 0.0
    for j in range(f.size):
        a = abs(f[j])
        e = math.exp(-2.0 * a)
        up = p + eps * m
        dn = eps * p + m
        if f[j] >= 0:
            dn *= e
        else:
            up *= e
        s = up + dn
        acc += a + math.log(s)
        p, m = up / s, dn / s
    if pinned:
        acc += math.log(p)
    return acc


@numba.njit(cache=True, nogil=True)
def _log_z_backward(f, eps, pinned):
    """Same quantity as :func:`_log_z_forward`, by right-to-left products."""
    if pinned:
        u, d = 1.0, 0.0
    else:
        u, d = 0.5, 0.5
    acc = 0.0 if pinned else math.log(2.0)
    for j in range(f.size - 1, -1, -1):
        a = abs(f[j])
        e = math.exp(-2.0 * a)
        wu, wd = u, d
        if f[j] >= 0:
            wd *= e
        else:
            wu *= e
        # sigma_{j-1} = +1 sees (wu + eps wd), -1 sees (eps wu + wd)
        nu = wu + eps * wd
        nd = eps * wu + wd
        s = nu + nd
        acc += a + math.log(s)
        u, d = nu / s, nd / s
    return acc + math.log(u)


@numba.njit(cache=True, nogil=True)
def _marginals(f, M, spin, pinned_state):
    """Single-site marginals of a chain with K states.

    ``M`` is the (normalized) K x K coupling, ``spin[k]`` multiplies the
    site field in state ``k``; the chain starts in state 0 at site 0.
    ``pinned_state >= 0`` pins the last site. Returns (N, K) probabilities.
    """
    n = f.size
    K = spin.size
    fwd = np.zeros((n, K))
    prev = np.zeros(K)
    prev[0] = 1.0
    for j in range(n):
        top = -1e300
        for k in range(K):
            if f[j] * spin[k] > top:
                top = f[j] * spin[k]
        s = 0.0
        for k in range(K):
            x = 0.0
            for q in range(K):
                x += prev[q] * M[q, k]
            x *= math.exp(f[j] * spin[k] - top)
            fwd[j, k] = x
            s += x
        for k in range(K):
            fwd[j, k] /= s
            prev[k] = fwd[j, k]
    out = np.zeros((n, K))
    bwd = np.ones(K)
    if pinned_state >= 0:
        bwd[:] = 0.0
        bwd[pinned_state] = 1.0
    for j in range(n - 1, -1, -1):
        s = 0.0
        for k in range(K):
            out[j, k] = fwd[j, k] * bwd[k]
            s += out[j, k]
        for k in range(K):
            out[j, k] /= s
        if j > 0:
            top = -1e300
            for k in range(K):
                if f[j] * spin[k] > top:
                    top = f[j] * spin[k]
            nb = np.zeros(K)
            t = 0.0
            for q in range(K):
                x = 0.0
                for k in range(K):
                    x += M[q, k] * math.exp(f[j] * spin[k] - top) * bwd[k]
                nb[q] = x
                t += x
            for q in range(K):
                bwd[q] = nb[q] / t
    return out


def _coupling(J: float) -> np.ndarray:
    e = math.exp(-2.0 * J)
    return np.array([[1.0, e], [e, 1.0]])


_SPIN2 = np.array([1.0, -1.0])
_SPIN4 = np.array([2.0, 0.0, 0.0, -2.0])            # sigma + sigma'
_PROD4 = np.array([1.0, -1.0, -1.0, 1.0])           # sigma * sigma'


def _log_ratio(f: np.ndarray, J: float, pinned: bool, backward: bool = False) -> float:
    eps = math.exp(-2.0 * J)
    kern = _log_z_backward if backward else _log_z_forward
    return kern(f, eps, pinned) - kern(np.zeros_like(f), eps, pinned)


def transfer_ratio(chain: DiscreteChain, backward: bool = False) -> float:
    """``log(Z / Z_pure)`` for the chain, ``Z_pure`` having zero fields.

    ``backward=True`` multiplies the transfer matrices right to left; the
    result agrees with the default up to rounding.
    """
    return _log_ratio(chain.fields, chain.J, chain.pinned, backward)


def site_magnetizations(chain: DiscreteChain) -> np.ndarray:
    """Gibbs expectations ``<sigma_j>``, ``j = 1..N``."""
    p = _marginals(chain.fields, _coupling(chain.J), _SPIN2, 0 if chain.pinned else -1)
    return p[:, 0] - p[:, 1]


def replica_overlaps(chain: DiscreteChain) -> np.ndarray:
    """``<sigma_j sigma'_j>`` for two replicas sharing the disorder.

    Computed with the 4 x 4 two-replica transfer matrix (the tensor square
    of the one-replica matrix), so it equals ``<sigma_j>**2``.
    """
    M = _coupling(chain.J)
    p = _marginals(chain.fields, np.kron(M, M), _SPIN4, 0 if chain.pinned else -1)
    return p @ _PROD4


# ---------------------------------------------------------------------------
# scaling limit


def continuum_log_partition(path: SampledPath, gamma: float) -> float:
    """``log Z`` of the continuum chain on ``[0, ell]`` with ``s_0 = +1`` and free end.

    Along the left process started from ``+inf`` at the left end,

        log Z = B_ell - B_0 - eps*ell + eps * int e^{-l} + log(1 + e^{-l_ell}),

    the integral being taken by the trapezoid rule on the path grid.
    """
    eps = epsilon(gamma)
    l = integrate_l(path, gamma).values
    g = np.exp(-l)
    integral = path.dt * (g.sum() - 0.5 * (g[0] + g[-1]))
    ell = path.t_end - path.t0
    return float(path.values[-1] - path.values[0] - eps * ell + eps * integral
                 + math.log1p(g[-1]))


@dataclass
class ScalingRow:
    delta: float
    N: int
    mean_log_ratio: float
    var_log_ratio: float
    continuum_mean: float
    continuum_var: float
    gap: float
    gap_stderr: float


@dataclass
class ScalingReport:
    gamma: float
    alpha: float
    ell: float
    samples: int
    seed: int
    continuum_dt: float
    rows: list[ScalingRow]
    config_digest: str
    elapsed: float = 0.0
    version: str = __version__

    @property
    def monotone(self) -> bool:
        """Each gap is below the previous one up to 3 combined stderr."""
        r = self.rows
        return all(b.gap <= a.gap + 3.0 * math.hypot(a.gap_stderr, b.gap_stderr)
                   for a, b in zip(r, r[1:]))

    def payload(self) -> dict:
        d = asdict(self)
        d.pop("elapsed")
        d["monotone"] = self.monotone
        return d


def _paired_gap(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """``|mean x - mean y| + |var x - var y|`` and a paired standard error."""
    n = x.size
    dm = x.mean() - y.mean()
    cx = (x - x.mean()) ** 2
    cy = (y - y.mean()) ** 2
    dv = (cx.sum() - cy.sum()) / (n - 1)
    se_m = np.std(x - y, ddof=1) / math.sqrt(n)
    se_v = np.std(cx - cy, ddof=1) / math.sqrt(n)
    return float(abs(dm) + abs(dv)), float(math.hypot(se_m, se_v))


def scaling_limit_check(gamma: float = 1.0, alpha: float = 0.0, ell: float = 1.0,
                        deltas: Sequence[float] = (1e-2, 1e-3, 1e-4), samples: int = 1000,
                        seed: int = 0, refine: int = 4, workers: int = 1) -> ScalingReport:
    """Compare moments of the discrete log ratio with the continuum ``log Z``.

    For each ``Delta`` the chain has ``N = floor(ell/Delta)`` sites and the
    parameters given in the module notes. As a variance reduction, the
    discrete disorder and the continuum path share their randomness. The
    Brownian path is sampled on a grid of step ``min(deltas)/refine``, and
    ``omega_j`` is its normalized increment over the ``j``-th block of
    length ``Delta``. Each ``omega_j`` is exactly standard Gaussian, so
    each side keeps its own law and only the moment estimates become
    correlated.
    """
    t0 = time.perf_counter()
    deltas = [float(d) for d in deltas]
    if samples < 2:
        raise ValueError("samples must be at least 2")
    if any(not d > 0 for d in deltas) or not ell > 0 or not gamma > 0:
        raise ValueError("gamma, ell and every Delta must be positive")
    dt_c = min(deltas) / int(refine)
    n_c = int(round(ell / dt_c))
    blocks = []
    for d in deltas:
        m = int(round(d / dt_c))
        if abs(m * dt_c - d) > 1e-9 * d:
            raise ValueError("every Delta must be a multiple of min(deltas)/refine")
        blocks.append((m, int(math.floor(ell / d + 1e-9))))

    def one(i: int):
        z = rng_stream(seed, NS_SCALING, i).standard_normal(n_c)
        w = np.empty(n_c + 1)
        w[0] = 0.0
        np.cumsum(z, out=w[1:])
        w *= math.sqrt(dt_c)
        w += alpha * dt_c * np.arange(n_c + 1)
        out = [continuum_log_partition(SampledPath(w, dt_c), gamma)]
        for d, (m, N) in zip(deltas, blocks):
            omega = z[:m * N].reshape(N, m).sum(axis=1) / math.sqrt(m)
            f = math.sqrt(d) * omega + alpha * d
            out.append(_log_ratio(f, gamma / 2.0 - 0.5 * math.log(d), False))
        return out

    vals = np.array(_run(one, int(samples), workers))
    cont = vals[:, 0]
    rows = []
    for k, (d, (_, N)) in enumerate(zip(deltas, blocks)):
        x = vals[:, k + 1]
        gap, se = _paired_gap(x, cont)
        rows.append(ScalingRow(d, N, float(x.mean()), float(x.var(ddof=1)),
                               float(cont.mean()), float(cont.var(ddof=1)), gap, se))
    cfg = {"gamma": float(gamma), "alpha": float(alpha), "ell": float(ell), "deltas": deltas,
           "samples": int(samples), "seed": int(seed), "refine": int(refine),
           "estimator": "discrete_scaling"}
    return ScalingReport(float(gamma), float(alpha), float(ell), int(samples), int(seed), dt_c,
                         rows, config_digest(cfg), time.perf_counter() - t0)


def write_csv(report: ScalingReport, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["delta", "mean_log_ratio", "var_log_ratio", "continuum_mean", "continuum_var", "gap"])
    for r in report.rows:
        w.writerow([repr(r.delta), repr(r.mean_log_ratio), repr(r.var_log_ratio),
                    repr(r.continuum_mean), repr(r.continuum_var), repr(r.gap)])


# ---------------------------------------------------------------------------
# overlap identity


@dataclass
class OverlapReport:
    N: int
    J: float
    h: float
    delta: float
    samples: int
    seed: int
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    diff_stderr: float
    step: float
    config_digest: str
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def z(self) -> float:
        return abs(self.lhs - self.rhs) / self.diff_stderr if self.diff_stderr > 0 else 0.0

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.lhs_stderr, self.rhs_stderr)

    def payload(self) -> dict:
        d = asdict(self)
        d.pop("elapsed")
        return d


def overlap_identity_check(N: int = 50, J: float = 2.0, h: float = 0.0, delta: float = 0.3,
                           samples: int = 10_000, seed: int = 0, step: float = 1e-3,
                           workers: int = 1) -> OverlapReport:
    """Both sides of the Gaussian integration-by-parts identity.

    Left: ``d/dlambda E log Z`` at ``lambda = 1``, where ``lambda`` scales
    ``h`` and ``delta`` together. It is a central difference of step
    ``step``, and both evaluations use the same disorder. Right:
    ``h * sum_j <sigma_j> + delta**2 * sum_j (1 - <sigma_j sigma'_j>)``,
    with the two-replica term taken from the 4 x 4 transfer matrix.
    """
    t0 = time.perf_counter()
    DiscreteChain(N, J, h, delta, np.zeros(N))       # validates the parameters
    if samples < 2:
        raise ValueError("samples must be at least 2")
    M4 = np.kron(_coupling(J), _coupling(J))

    def one(i: int):
        omega = rng_stream(seed, NS_OVERLAP, i).standard_normal(N)
        f = h + delta * omega
        lp = _log_ratio((1.0 + step) * f, J, False)
        lm = _log_ratio((1.0 - step) * f, J, False)
        lhs = (lp - lm) / (2.0 * step)
        mag = _marginals(f, _coupling(J), _SPIN2, -1)
        q = _marginals(f, M4, _SPIN4, -1) @ _PROD4
        rhs = h * float(np.sum(mag[:, 0] - mag[:, 1])) + delta ** 2 * float(np.sum(1.0 - q))
        return lhs, rhs

    v = np.array(_run(one, int(samples), workers))
    n = v.shape[0]
    se = np.std(v, axis=0, ddof=1) / math.sqrt(n)
    dse = float(np.std(v[:, 0] - v[:, 1], ddof=1) / math.sqrt(n))
    cfg = {"N": int(N), "J": float(J), "h": float(h), "delta": float(delta), "samples": int(samples),
           "seed": int(seed), "step": float(step), "estimator": "overlap"}
    return OverlapReport(int(N), float(J), float(h), float(delta), int(samples), int(seed),
                         float(v[:, 0].mean()), float(se[0]), float(v[:, 1].mean()), float(se[1]),
                         dse, float(step), config_digest(cfg), time.perf_counter() - t0)
