"""Sampled Brownian paths on a uniform time grid.

A :class:`SampledPath` stores ``values[k] = B(t0 + k*dt)``. The grid is
anchored to the time origin: ``t0`` is always an integer multiple of
``dt`` (stored as the integer offset ``k0``), so mirroring and shifting
are exact integer operations and never accumulate rounding.

Bilateral paths are built from two independent one-sided walks glued at
the origin, each drawn from its own random stream. Streams are keyed by
``(seed, *stream, side)`` through :class:`numpy.random.SeedSequence`, so
a replica's path depends only on its key and never on scheduling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

__all__ = [
    "SampledPath",
    "rng_stream",
    "sample_bilateral",
    "reverse",
    "shift",
    "max_modulus",
    "write_csv",
]

_GRID_TOL = 1e-9

# stream ids for the two half-lines of a bilateral path
LEFT, RIGHT = 0, 1


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _grid_index(t: float, dt: float) -> int:
    """Integer ``k`` with ``k*dt == t`` up to a relative grid tolerance."""
    q = t / dt
    k = int(round(q))
    if abs(q - k) > _GRID_TOL * max(1.0, abs(q)):
        raise ValueError(f"time {t!r} is not on the grid of step {dt!r}")
    return k


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Real-valued path on the grid ``t_k = (k0 + k) * dt``.

    Parameters
    ----------
    values : array_like
        Path values, at least two, all finite.
    dt : float
        Grid step, strictly positive.
    k0 : int
        Grid index of ``values[0]``; the start time is ``k0 * dt``.
    drift : float
        Drift ``alpha`` the path was sampled with (metadata).
    scale : float
        Noise scale ``lambda`` the path was sampled with (metadata).
    """

    values: np.ndarray
    dt: float
    k0: int = 0
    drift: float = 0.0
    scale: float = 1.0
    _times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a path needs at least two grid points")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be a positive finite number")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "k0", int(self.k0))
        object.__setattr__(self, "dt", float(self.dt))
        t = (self.k0 + np.arange(v.size)) * self.dt
        t.setflags(write=False)
        object.__setattr__(self, "_times", t)

    @classmethod
    def from_start(cls, values, dt: float, t0: float = 0.0, **kw) -> "SampledPath":
        """Build a path whose first point sits at time ``t0`` (on the grid)."""
        return cls(values, dt, k0=_grid_index(t0, dt), **kw)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def t0(self) -> float:
        return self.k0 * self.dt

    @property
    def t_end(self) -> float:
        return (self.k0 + self.n - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self._times

    def time_of(self, k: int) -> float:
        return (self.k0 + int(k)) * self.dt

    def index_of(self, t: float) -> int:
        """Array index of grid time ``t``; raises if off-grid or outside."""
        k = _grid_index(t, self.dt) - self.k0
        if not 0 <= k < self.n:
            raise ValueError(f"time {t!r} lies outside the window [{self.t0}, {self.t_end}]")
        return k

    @property
    def origin_index(self) -> int:
        """Array index of ``t = 0``; raises if the window misses the origin."""
        return self.index_of(0.0)

    def window(self, t_start: float | None = None, t_stop: float | None = None) -> "SampledPath":
        """Sub-path on ``[t_start, t_stop]`` (grid times, inclusive)."""
        i = 0 if t_start is None else self.index_of(t_start)
        j = self.n - 1 if t_stop is None else self.index_of(t_stop)
        return self.slice(i, j + 1)

    def slice(self, i: int, j: int) -> "SampledPath":
        """Sub-path on array indices ``[i, j)``."""
        return SampledPath(self.values[i:j], self.dt, self.k0 + i, self.drift, self.scale)

    def with_values(self, values) -> "SampledPath":
        return SampledPath(values, self.dt, self.k0, self.drift, self.scale)

    def __eq__(self, other):
        if not isinstance(other, SampledPath):
            return NotImplemented
        return (self.k0 == other.k0 and self.dt == other.dt
                and np.array_equal(self.values, other.values))

    __hash__ = None


def _walk(rng: np.random.Generator, steps: int, dt: float) -> np.ndarray:
    """Standard Brownian walk of ``steps`` steps, starting at 0 (length steps+1)."""
    w = np.empty(steps + 1)
    w[0] = 0.0
    np.cumsum(rng.standard_normal(steps), out=w[1:])
    w[1:] *= math.sqrt(dt)
    return w


def sample_bilateral(seed: int, t_min: float, t_max: float, dt: float,
                     alpha: float = 0.0, scale: float = 1.0,
                     stream: Iterable[int] = ()) -> SampledPath:
    """Sample ``alpha*t + scale*W_t`` on the grid points of ``[t_min, t_max]``.

    ``W`` is a two-sided Brownian motion with ``W_0 = 0``: the right
    half-line and the left half-line are independent walks drawn from the
    streams ``(seed, *stream, 1)`` and ``(seed, *stream, 0)``. Each walk
    is generated outward from the origin, so enlarging the window keeps
    the already sampled part unchanged.

    Parameters
    ----------
    seed : int
        Master seed.
    t_min, t_max : float
        Window; grid points ``k*dt`` with ``t_min <= k*dt <= t_max``.
    dt : float
        Grid step.
    alpha, scale : float
        Drift and noise scale.
    stream : iterable of int
        Extra stream key, e.g. a replica number.

    Returns
    -------
    SampledPath
    """
    for name, x in (("t_min", t_min), ("t_max", t_max), ("dt", dt),
                    ("alpha", alpha), ("scale", scale)):
        if not math.isfinite(x):
            raise ValueError(f"{name} must be finite")
    if dt <= 0:
        raise ValueError("dt must be positive")
    k_min = math.ceil(t_min / dt - _GRID_TOL)
    k_max = math.floor(t_max / dt + _GRID_TOL)
    if k_max - k_min < 1:
        raise ValueError("window holds fewer than two grid points")
    key = tuple(stream)

    if k_min <= 0 <= k_max:
        right = _walk(rng_stream(seed, *key, RIGHT), k_max, dt)
        left = _walk(rng_stream(seed, *key, LEFT), -k_min, dt)
        w = np.concatenate([left[:0:-1], right])
    elif k_min > 0:
        # window entirely right of the origin: exact jump to the first point
        rng = rng_stream(seed, *key, RIGHT)
        start = rng.standard_normal() * math.sqrt(k_min * dt)
        w = start + _walk(rng, k_max - k_min, dt)
    else:
        rng = rng_stream(seed, *key, LEFT)
        start = rng.standard_normal() * math.sqrt(-k_max * dt)
        w = (start + _walk(rng, k_max - k_min, dt))[::-1]

    k = np.arange(k_min, k_max + 1)
    values = (alpha * dt) * k + scale * w
    return SampledPath(values, dt, k_min, alpha, scale)


def reverse(path: SampledPath) -> SampledPath:
    """Time reversal ``t -> B(-t)`` on the mirrored grid."""
    return SampledPath(path.values[::-1], path.dt, -(path.k0 + path.n - 1),
                       -path.drift, path.scale)


def shift(path: SampledPath, t: float) -> SampledPath:
    """Recentred path ``s -> B(t + s) - B(t)``; ``t`` must be a grid time."""
    k = path.index_of(t)
    return SampledPath(path.values - path.values[k], path.dt, -k, path.drift, path.scale)


def max_modulus(path: SampledPath, a: float) -> float:
    """Largest ``|B_s - B_u|`` over grid pairs with ``|s - u| <= a``."""
    if not a > 0:
        raise ValueError("a must be positive")
    lag = int(math.floor(a / path.dt + _GRID_TOL))
    v = path.values
    if lag == 0:
        return 0.0
    if lag >= v.size - 1:
        return float(v.max() - v.min())
    hi = maximum_filter1d(v, size=lag + 1, mode="nearest")
    lo = minimum_filter1d(v, size=lag + 1, mode="nearest")
    return float(np.max(hi - lo))


def write_csv(path: SampledPath, fh: TextIO) -> None:
    """Write ``t,value`` rows with round-trip precision."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "value"])
    for t, x in zip(path.times, path.values):
        w.writerow([repr(float(t)), repr(float(x))])
