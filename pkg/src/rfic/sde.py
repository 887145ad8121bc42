"""One-sided diffusions l, r, the magnetization field, and the hard-wall model.

The left process solves ``dl = -2 eps sinh(l) dt + 2 dB`` with
``eps = exp(-Gamma)``. It is integrated by Strang splitting: the drift
flow is solved exactly, and between two half drift-flows the increment
``2 dB`` is added. With ``u = tanh(l/2)`` the drift flow is
``u -> exp(-2 eps t) u``, which makes the scheme unconditionally stable
near the confining walls at ``|l| ~ Gamma`` and lets ``l = +inf`` be an
initial condition.

The right process is the left process of the time-reversed, sign-flipped
path. Validators for the envelope bounds, the deterministic bounds and
the tanh contraction are collected at the end of the module.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import TextIO

import numba
import numpy as np

from .extrema import WindowExhausted, backward_neveu_pitman, forward_neveu_pitman
from .path import SampledPath, reverse

__all__ = [
    "SdeTrajectory", "ReflectedTrajectory", "LinearSystem",
    "epsilon", "default_dt",
    "integrate_l", "integrate_r", "magnetization", "integrate_linear_system",
    "reflect_simplified", "simplified_closed_form", "envelope_bounds", "envelope_curves",
    "deterministic_bounds", "contraction_excess", "write_csv",
]


def epsilon(gamma: float) -> float:
    """Flip intensity ``exp(-gamma)``; ``gamma = inf`` gives 0."""
    return math.exp(-gamma)


def default_dt(gamma: float) -> float:
    """Default grid step ``min(gamma**2 * 1e-3, 1e-2)``."""
    return min(gamma * gamma * 1e-3, 1e-2)


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _drift_flow(l, om, op):
    # exact flow of dl = -2 eps sinh(l) dt over a time tau, written with
    # c = exp(-2 eps tau), om = 1 - c, op = 1 + c and w = exp(-|l|) so that
    # l = +-inf and l = 0 are both handled without cancellation
    if l == 0.0:
        return 0.0
    w = math.exp(-abs(l))
    y = math.log((op + w * om) / (om + w * op))
    return y if l > 0 else -y


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _strang(v, start, stop, l0, eps, dt, out):
    """Fill out[start..stop] with l, starting from l0 at index start."""
    om = -math.expm1(-eps * dt)      # half step: c = exp(-2 eps dt/2)
    op = 2.0 - om
    l = l0
    out[start] = l0
    for k in range(start, stop):
        l = _drift_flow(l, om, op)
        l += 2.0 * (v[k + 1] - v[k])
        l = _drift_flow(l, om, op)
        out[k + 1] = l


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _clamp(v, start, stop, gamma, out):
    x = gamma
    out[start] = x
    for k in range(start, stop):
        x += 2.0 * (v[k + 1] - v[k])
        if x > gamma:
            x = gamma
        elif x < -gamma:
            x = -gamma
        out[k + 1] = x


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _linear_em(v, start, stop, eps, dt, eta, max_first, y1, y2):
    """Euler-Maruyama for (log X1, log X2) with local substeps.

    The grid increment of B is spread linearly over the substeps. A step
    is cut whenever eps*exp(|l|)*tau would exceed eta, which only happens
    in the stiff start-up when X2 is still tiny.
    """
    # first substep from X2 = 0: X2 = eps*tau, X1 unchanged
    tau0 = dt / max_first
    a = 0.0
    b = math.log(eps * tau0)
    y1[start] = 0.0
    y2[start] = -np.inf
    first = True
    for k in range(start, stop):
        db = v[k + 1] - v[k]
        rem = dt
        if first:
            rem -= tau0
            b -= 2.0 * db * tau0 / dt
            first = False
        while rem > 0.0:
            l = a - b
            rate = eps * math.exp(abs(l))
            tau = rem
            if rate * tau > eta:
                tau = eta / rate
                if tau > rem:
                    tau = rem
            na = a + eps * math.exp(-l) * tau
            nb = b + eps * math.exp(l) * tau - 2.0 * db * tau / dt
            a = na
            b = nb
            rem -= tau
            if rem < 1e-15 * dt:
                rem = 0.0
        y1[k + 1] = a
        y2[k + 1] = b


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class SdeTrajectory:
    """Grid samples of l (or r) on ``path.times[start:stop+1]``.

    ``values[0]`` is the initial condition for a left process; for a
    right process (``side == 'right'``) the initial condition is the last
    entry. Only the initial entry may be infinite.
    """

    path: SampledPath
    gamma: float
    start: int
    values: np.ndarray
    side: str = "left"
    scheme: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return epsilon(self.gamma)

    @property
    def stop(self) -> int:
        return self.start + self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return self.path.times[self.start:self.stop + 1]

    def at(self, t: float) -> float:
        return float(self.values[self.path.index_of(t) - self.start])


@dataclass(frozen=True, eq=False)
class ReflectedTrajectory:
    path: SampledPath
    gamma: float
    start: int
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.path.times[self.start:self.start + self.values.size]

    def at(self, t: float) -> float:
        return float(self.values[self.path.index_of(t) - self.start])


def _start_index(path: SampledPath, a: float | None) -> int:
    return 0 if a is None else path.index_of(a)


def integrate_l(path: SampledPath, gamma: float, a: float | None = None,
                l0: float = math.inf, steps: int | None = None) -> SdeTrajectory:
    """Left process started at grid time ``a`` from ``l0``.

    Parameters
    ----------
    path : SampledPath
        Driving path ``B``.
    gamma : float
        Barrier height; ``eps = exp(-gamma)``. ``math.inf`` switches the
        drift off.
    a : float, optional
        Start time (grid time); defaults to the first grid point.
    l0 : float
        Initial condition, ``+-inf`` allowed.
    steps : int, optional
        Number of grid steps; defaults to the rest of the window.
    """
    if math.isnan(l0):
        raise ValueError("l0 must not be NaN")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    i = _start_index(path, a)
    j = path.n - 1 if steps is None else i + int(steps)
    if not i <= j < path.n:
        raise ValueError("integration runs past the end of the window")
    out = np.empty(path.n)
    eps = epsilon(gamma)
    _strang(path.values, i, j, float(l0), eps, path.dt, out)
    return SdeTrajectory(path, float(gamma), i, out[i:j + 1].copy(), "left",
                         {"method": "strang", "drift": "exact", "dt": path.dt})


def _mirror_driver(path: SampledPath) -> SampledPath:
    rv = reverse(path)
    return rv.with_values(-rv.values)


def integrate_r(path: SampledPath, gamma: float, b: float | None = None,
                r0: float = math.inf) -> SdeTrajectory:
    """Right process started at grid time ``b`` from ``r0``, run leftward.

    It is the left process of ``t -> -B(-t)`` started at ``-b``, read
    back on the original time axis.
    """
    q = _mirror_driver(path)
    a = None if b is None else -b
    lt = integrate_l(q, gamma, a, r0)
    stop = path.n - 1 - lt.start
    return SdeTrajectory(path, lt.gamma, stop - lt.values.size + 1, lt.values[::-1].copy(),
                         "right", lt.scheme)


def magnetization(l: SdeTrajectory, r: SdeTrajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(times, m, p_up)`` on the common part of the two trajectories.

    ``m = l + r`` and ``p_up = 1 / (1 + exp(-m))``.
    """
    if l.path.dt != r.path.dt or l.path.k0 != r.path.k0 or l.path.n != r.path.n:
        raise ValueError("l and r live on different grids")
    lo = max(l.start, r.start)
    hi = min(l.stop, r.stop)
    if hi < lo:
        raise ValueError("l and r do not overlap")
    m = l.values[lo - l.start:hi - l.start + 1] + r.values[lo - r.start:hi - r.start + 1]
    p_up = 0.5 * (1.0 + np.tanh(0.5 * m))
    return l.path.times[lo:hi + 1], m, p_up


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Log-scaled solution of the linear system started at ``(1, 0)``."""

    path: SampledPath
    gamma: float
    start: int
    log_x1: np.ndarray
    log_x2: np.ndarray

    @property
    def l_check(self) -> np.ndarray:
        return self.log_x1 - self.log_x2

    @property
    def times(self) -> np.ndarray:
        return self.path.times[self.start:self.start + self.log_x1.size]


def integrate_linear_system(path: SampledPath, gamma: float, a: float | None = None,
                            eta: float = 2e-3, max_first: int = 1000) -> LinearSystem:
    """Euler-Maruyama solution of the linear system behind ``L = X1/X2``.

    ``dX1 = eps X2 dt`` and ``dX2 = (eps X1 + 2 X2) dt - 2 X2 dB`` with
    ``(X1, X2)(a) = (1, 0)``. In log variables the noise is additive and
    there is no Ito correction: ``d log X1 = eps e^{-l} dt`` and
    ``d log X2 = eps e^{l} dt - 2 dB`` with ``l = log X1 - log X2``.

    Near ``t = a`` the ratio ``X1/X2`` is huge and the drift is stiff;
    the step is then cut into substeps with ``eps e^{|l|} tau <= eta``,
    the grid increment of ``B`` being spread linearly over them. The
    very first substep (``dt/max_first``) is the explicit step that
    lifts ``X2`` off zero.
    """
    if not gamma > 0 or math.isinf(gamma):
        raise ValueError("gamma must be positive and finite")
    if not 0 < eta <= 0.5:
        raise ValueError("eta must lie in (0, 0.5]")
    i = _start_index(path, a)
    y1 = np.empty(path.n)
    y2 = np.empty(path.n)
    _linear_em(path.values, i, path.n - 1, epsilon(gamma), path.dt, float(eta), int(max_first), y1, y2)
    return LinearSystem(path, float(gamma), i, y1[i:].copy(), y2[i:].copy())


def reflect_simplified(path: SampledPath, gamma: float, a: float | None = None) -> ReflectedTrajectory:
    """Hard-wall model: ``x <- clamp(x + 2 dB, -gamma, gamma)`` from ``x = gamma``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    i = _start_index(path, a)
    out = np.empty(path.n)
    _clamp(path.values, i, path.n - 1, float(gamma), out)
    return ReflectedTrajectory(path, float(gamma), i, out[i:].copy())


@dataclass(frozen=True)
class SimplifiedOrigin:
    l_hat: float
    r_hat: float
    m_hat: float
    sign: int
    first_left: int    # path index of v1 (nearest extremum left of 0)
    first_right: int   # path index of u1


def simplified_closed_form(path: SampledPath, gamma: float) -> SimplifiedOrigin:
    """Stationary hard-wall values at the origin from the first stop times.

    Going left from 0, let ``v1`` be the first event of the backward scan
    and ``a1'`` its arrow; going right, ``u1`` and ``a1``. Then
    ``l_hat = a1' gamma - 2 (B(v1) - B(0))`` and
    ``r_hat = -a1 gamma + 2 (B(u1) - B(0))``.

    Raises
    ------
    WindowExhausted
        When a side holds no stop time.
    """
    k0 = path.origin_index
    right = forward_neveu_pitman(path.slice(k0, path.n), gamma, max_events=1)
    left = backward_neveu_pitman(path.slice(0, k0 + 1), gamma, max_events=1)
    if not len(right):
        raise WindowExhausted("right")
    if not len(left):
        raise WindowExhausted("left")
    v = path.values
    u1 = int(right.index[0]) + k0
    v1 = int(left.index[-1])
    l_hat = int(left.kind[-1]) * gamma - 2.0 * (v[v1] - v[k0])
    r_hat = -int(right.kind[0]) * gamma + 2.0 * (v[u1] - v[k0])
    m_hat = l_hat + r_hat
    return SimplifiedOrigin(l_hat, r_hat, m_hat, int(np.sign(m_hat)), v1, u1)


# ---------------------------------------------------------------------------
# validators


def _log_cumtrapz(logf: np.ndarray, dt: float) -> np.ndarray:
    """``log`` of the cumulative trapezoid integral of ``exp(logf)`` (first entry -inf)."""
    seg = np.logaddexp(logf[:-1], logf[1:]) + math.log(dt / 2.0)
    out = np.empty(logf.size)
    out[0] = -np.inf
    out[1:] = np.logaddexp.accumulate(seg)
    return out


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _upper_envelope(dtheta, x, eps, dt, out):
    """``theta_t - log(1 + eps int_a^t e^{theta_s} ds)`` from the increments of ``theta``.

    With ``Q_t = e^{-theta_t} (1 + eps int_a^t e^{theta_s} ds)`` the
    trapezoid rule gives ``Q_{k+1} = e^{-d_k} Q_k + eps dt (1 + e^{-d_k}) / 2``,
    and the curve is ``-log Q``. Same discretization as the direct formula,
    without cancellation between two large numbers.
    """
    q = math.exp(-x)
    for k in range(dtheta.size):
        e = math.exp(-dtheta[k])
        q = e * q + 0.5 * eps * dt * (1.0 + e)
        out[k + 1] = -math.log(q)


def envelope_curves(path: SampledPath, gamma: float, a: float, x: float,
                    t_end: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper envelopes of ``l^{(a,x)}`` on the grid ``(a, t_end]``.

    Lower: ``x + 2 dB - log(1 + eps e^x I_+)`` with
    ``I_+ = int_a^t e^{2 (B_s - B_a)} ds``. Upper: ``theta - log(1 + eps
    int_a^t e^{theta_s} ds)`` with
    ``theta = x + 2 dB + eps e^{-x} I_- + eps^2 int_a^t int_a^s e^{2 (B_r - B_s)} dr ds``.
    For ``x = +inf`` the limits ``-log eps - log int_a^t e^{2 (B_s - B_t)} ds``
    (lower) and the same plus the double integral (upper) are used.
    Integrals are cumulative trapezoids on the grid.
    """
    i = path.index_of(a)
    j = path.n - 1 if t_end is None else path.index_of(t_end)
    if j <= i:
        raise ValueError("t must be later than a")
    eps = epsilon(gamma)
    b = path.values[i:j + 1] - path.values[i]
    dt = path.dt
    log_ip = _log_cumtrapz(2.0 * b, dt)              # log I_+
    inner = np.exp(log_ip - 2.0 * b)                 # e^{-2 b_s} int_a^s e^{2 b_r} dr
    inner[0] = 0.0
    dbl = np.concatenate([[0.0], np.cumsum(0.5 * dt * (inner[:-1] + inner[1:]))])
    if eps == 0.0:
        lower = upper = x + 2.0 * b
        return lower[1:], upper[1:]
    if math.isinf(x) and x > 0:
        lower = -math.log(eps) - (log_ip - 2.0 * b)
        upper = lower + eps * eps * dbl
        return lower[1:], upper[1:]
    lower = x + 2.0 * b - np.logaddexp(0.0, math.log(eps) + x + log_ip)
    # per-step increments of theta; theta itself can reach 1e17 when B drifts
    # far below B_a, so the upper curve is built from increments only
    with np.errstate(over="ignore"):
        e2 = np.exp(-2.0 * b)
        dtheta = (2.0 * np.diff(b) + eps * math.exp(-x) * 0.5 * dt * (e2[:-1] + e2[1:])
                  + eps * eps * np.diff(dbl))
    upper = np.empty(b.size)
    upper[0] = x
    _upper_envelope(dtheta, x, eps, dt, upper)
    return lower[1:], upper[1:]


def envelope_bounds(path: SampledPath, gamma: float, a: float, x: float, t: float) -> tuple[float, float]:
    """Envelope bounds of ``l^{(a,x)}_t`` at a single grid time ``t > a``."""
    lo, hi = envelope_curves(path, gamma, a, x, t)
    return float(lo[-1]), float(hi[-1])


def deterministic_bounds(traj: SdeTrajectory, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Bounds on ``l_t`` for grid times ``t >= T`` given ``l_T`` alone.

    ``l_t >= l_T + 2 (b_t - b_T) - log(1 + eps e^{l_T} int_T^t e^{2 (b_s - b_T)} ds)``
    and ``l_t <= l_T + 2 (b_t - b_T) + log(1 + eps e^{-l_T} int_T^t e^{-2 (b_s - b_T)} ds)``.
    """
    path = traj.path
    i = path.index_of(T)
    lT = traj.values[i - traj.start]
    if not math.isfinite(lT):
        raise ValueError("l_T must be finite")
    b = path.values[i:traj.stop + 1] - path.values[i]
    le = math.log(traj.epsilon) if traj.epsilon > 0 else -np.inf
    lower = lT + 2.0 * b - np.logaddexp(0.0, le + lT + _log_cumtrapz(2.0 * b, path.dt))
    upper = lT + 2.0 * b + np.logaddexp(0.0, le - lT + _log_cumtrapz(-2.0 * b, path.dt))
    return lower, upper


def contraction_excess(l1: SdeTrajectory, l2: SdeTrajectory, s: float | None = None) -> float:
    """Largest violation of ``tanh(D_t/4) <= e^{-2 eps (t - s)} tanh(D_s/4)``.

    ``D = l2 - l1`` with ``l2`` above ``l1``; returns
    ``max_t tanh(D_t/4) / (e^{-2 eps (t-s)} tanh(D_s/4)) - 1`` over grid
    times ``t > s`` (non-positive when the bound holds). ``s`` defaults to
    the first time both trajectories are finite.
    """
    if l1.start != l2.start or l1.values.size != l2.values.size:
        raise ValueError("trajectories must share their grid")
    d = l2.values - l1.values
    ok = np.isfinite(d)
    k = int(np.argmax(ok)) if s is None else l1.path.index_of(s) - l1.start
    t = l1.times
    ref = math.tanh(d[k] / 4.0)
    if ref <= 0:
        raise ValueError("l2 must start above l1")
    ratio = np.tanh(d[k + 1:] / 4.0) / (np.exp(-2.0 * l1.epsilon * (t[k + 1:] - t[k])) * ref)
    return float(np.max(ratio) - 1.0) if ratio.size else -1.0


def write_csv(l: SdeTrajectory, r: SdeTrajectory, fh: TextIO) -> None:
    """Write ``t,l,r,m,p_up`` rows on the common grid."""
    times, m, p = magnetization(l, r)
    lo = max(l.start, r.start)
    lv = l.values[lo - l.start:lo - l.start + m.size]
    rv = r.values[lo - r.start:lo - r.start + m.size]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "l", "r", "m", "p_up"])
    for row in zip(times, lv, rv, m, p):
        w.writerow([repr(float(x)) for x in row])
