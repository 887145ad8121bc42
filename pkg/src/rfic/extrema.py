"""Gamma-extrema of sampled paths.

A grid point ``u`` is a Gamma-maximum when some pair ``a < u < b`` has
``B_u`` maximal on ``[a, b]`` and both ``B_a`` and ``B_b`` below
``B_u - Gamma``; Gamma-minima are defined the same way with the path
turned upside down. Three ways of finding them are provided:

* :func:`forward_neveu_pitman` scans left to right, alternately waiting
  for a rise or a drop of more than ``Gamma`` since the last record. The
  running extremum of each stretch is an event. Memory is O(1) per step.
* :func:`backward_neveu_pitman` is the same scan run right to left.
* :func:`bilateral_extrema` runs both scans out of the time origin and
  settles the two events nearest the origin, which a one-sided scan
  cannot confirm on its own.

:func:`brute_force_extrema` checks the definition point by point and
serves as the reference for the scanners.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numba
import numpy as np

from .path import SampledPath, reverse

__all__ = [
    "MAX", "MIN", "UP", "DOWN",
    "ExtremaEvent", "ExtremaSequence", "FisherTrajectory", "WindowExhausted",
    "forward_neveu_pitman", "backward_neveu_pitman", "bilateral_extrema",
    "brute_force_extrema", "fisher_trajectory", "resolve_origin", "write_csv",
]

MAX, MIN = 1, -1
UP, DOWN = 1, -1
_KIND_NAME = {MAX: "max", MIN: "min"}


class WindowExhausted(RuntimeError):
    """The window is too short for the requested scan; enlarge it."""

    def __init__(self, side: str, message: str | None = None):
        self.side = side
        super().__init__(message or f"no stop time found on the {side} side; enlarge the window")


@dataclass(frozen=True)
class ExtremaEvent:
    index: int
    time: float
    value: float
    kind: int
    provisional: bool

    @property
    def kind_name(self) -> str:
        return _KIND_NAME[self.kind]


@dataclass(frozen=True, eq=False)
class ExtremaSequence:
    """Alternating Gamma-extrema found on a path.

    Events are stored column-wise (``index``, ``kind``, ``provisional``);
    ``index`` refers to the path the sequence was computed on and is
    strictly increasing. ``stop_index``/``stop_direction`` record the grid
    points where a rise (``UP``) or drop (``DOWN``) of more than ``gamma``
    was first seen. ``pending`` is the running extremum of the stretch
    still open when the window ended, if any.
    """

    path: SampledPath
    gamma: float
    index: np.ndarray
    kind: np.ndarray
    provisional: np.ndarray
    stop_index: np.ndarray
    stop_direction: np.ndarray
    pending: ExtremaEvent | None = None
    status: str = "ok"

    def __len__(self) -> int:
        return self.index.size

    @property
    def time(self) -> np.ndarray:
        return self.path.times[self.index]

    @property
    def value(self) -> np.ndarray:
        return self.path.values[self.index]

    @property
    def stop_time(self) -> np.ndarray:
        return self.path.times[self.stop_index]

    @property
    def confirmed(self) -> np.ndarray:
        """Boolean mask of non-provisional events."""
        return ~self.provisional

    def event(self, i: int) -> ExtremaEvent:
        k = int(self.index[i])
        return ExtremaEvent(k, self.path.time_of(k), float(self.path.values[k]),
                            int(self.kind[i]), bool(self.provisional[i]))

    @property
    def events(self) -> list[ExtremaEvent]:
        return [self.event(i) for i in range(len(self))]

    def pairs(self, confirmed_only: bool = True) -> list[tuple[int, str]]:
        """``(index, 'max'|'min')`` pairs, handy for comparisons."""
        keep = self.confirmed if confirmed_only else np.ones(len(self), bool)
        return [(int(i), _KIND_NAME[int(k)]) for i, k in zip(self.index[keep], self.kind[keep])]


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True, nogil=True)
def _scan_resume(v, gamma, max_events, state, offset):
    """Forward Neveu-Pitman scan over ``v``, resumable across chunks.

    ``state`` holds (phase, lo, hi, vlo, vhi) with global indices and is
    updated in place; ``offset`` is the global index of ``v[0]``. On a
    fresh state (phase 2) the first point initialises the running
    extrema. Returns global event indices/kinds and stop indices/directions.
    """
    n = v.size
    cap = n if max_events < 0 else max_events
    ev_i = np.empty(cap, np.int64)
    ev_k = np.empty(cap, np.int8)
    st_i = np.empty(cap, np.int64)
    st_d = np.empty(cap, np.int8)
    m = 0
    phase = int(state[0])
    lo = int(state[1])
    hi = int(state[2])
    vlo = state[3]
    vhi = state[4]
    k0 = 0
    if phase == 2:
        phase = 0
        lo = hi = offset
        vlo = vhi = v[0]
        k0 = 1
    for k in range(k0, n):
        if m == cap:
            break
        x = v[k]
        g = offset + k
        if phase == 0:
            if x < vlo:
                lo, vlo = g, x
            if x > vhi:
                hi, vhi = g, x
            if x - vlo > gamma:
                ev_i[m], ev_k[m], st_i[m], st_d[m] = lo, -1, g, 1
                m += 1
                phase = 1
                hi, vhi = g, x
            elif vhi - x > gamma:
                ev_i[m], ev_k[m], st_i[m], st_d[m] = hi, 1, g, -1
                m += 1
                phase = -1
                lo, vlo = g, x
        elif phase == 1:
            if x > vhi:
                hi, vhi = g, x
            elif vhi - x > gamma:
                ev_i[m], ev_k[m], st_i[m], st_d[m] = hi, 1, g, -1
                m += 1
                phase = -1
                lo, vlo = g, x
        else:
            if x < vlo:
                lo, vlo = g, x
            elif x - vlo > gamma:
                ev_i[m], ev_k[m], st_i[m], st_d[m] = lo, -1, g, 1
                m += 1
                phase = 1
                hi, vhi = g, x
    state[0] = phase
    state[1] = lo
    state[2] = hi
    state[3] = vlo
    state[4] = vhi
    return ev_i[:m], ev_k[:m], st_i[:m], st_d[:m]


def new_scan_state() -> np.ndarray:
    """Fresh state vector for :func:`_scan_resume`."""
    return np.array([2.0, 0.0, 0.0, 0.0, 0.0])


@numba.njit(cache=True, nogil=True)
def _scan(v, gamma, max_events):
    """One-shot forward scan; also returns the pending candidate."""
    state = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
    ev_i, ev_k, st_i, st_d = _scan_resume(v, gamma, max_events, state, 0)
    phase = int(state[0])
    if max_events >= 0 and ev_i.size == max_events:
        return ev_i, ev_k, st_i, st_d, -1, 0
    if phase == 1:
        return ev_i, ev_k, st_i, st_d, int(state[2]), 1
    if phase == -1:
        return ev_i, ev_k, st_i, st_d, int(state[1]), -1
    return ev_i, ev_k, st_i, st_d, -1, 0


@numba.njit(cache=True, nogil=True)
def _brute_force(v, gamma):
    """Definition check at every interior grid point (+1 max, -1 min, 0)."""
    n = v.size
    out = np.zeros(n, np.int8)
    for u in range(1, n - 1):
        x = v[u]
        # maximum: walk outward until a higher point or a point below x - gamma
        ok = False
        for a in range(u - 1, -1, -1):
            if v[a] > x:
                break
            if v[a] < x - gamma:
                ok = True
                break
        if ok:
            for b in range(u + 1, n):
                if v[b] > x:
                    break
                if v[b] < x - gamma:
                    out[u] = 1
                    break
        if out[u] != 0:
            continue
        ok = False
        for a in range(u - 1, -1, -1):
            if v[a] < x:
                break
            if v[a] > x + gamma:
                ok = True
                break
        if ok:
            for b in range(u + 1, n):
                if v[b] < x:
                    break
                if v[b] > x + gamma:
                    out[u] = -1
                    break
    return out


# ---------------------------------------------------------------------------
# public scans


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return gamma


def forward_neveu_pitman(path: SampledPath, gamma: float, max_events: int = -1) -> ExtremaSequence:
    """Scan ``path`` from its first grid point to the right.

    The first event is flagged provisional: it is the extremum of the
    stretch that starts at the scan origin, so nothing is known about the
    path to its left. Each later event is confirmed by the stop time that
    ends its stretch. The extremum of the stretch left open at the end of
    the window is returned as ``pending`` (also provisional) and is not
    part of ``events``. A window with no stop time yields an empty
    sequence with ``status == 'no-stop-time'``.

    Parameters
    ----------
    path : SampledPath
    gamma : float
        Threshold, strictly positive.
    max_events : int, optional
        Stop after this many events (``-1`` scans the whole window).
    """
    gamma = _check_gamma(gamma)
    ev_i, ev_k, st_i, st_d, p_i, p_k = _scan(path.values, gamma, int(max_events))
    prov = np.zeros(ev_i.size, bool)
    if prov.size:
        prov[0] = True
    pending = None
    if p_i >= 0:
        pending = ExtremaEvent(int(p_i), path.time_of(p_i), float(path.values[p_i]), int(p_k), True)
    status = "ok" if ev_i.size else "no-stop-time"
    return ExtremaSequence(path, gamma, ev_i, ev_k.astype(np.int64), prov,
                           st_i, st_d.astype(np.int64), pending, status)


def backward_neveu_pitman(path: SampledPath, gamma: float, max_events: int = -1) -> ExtremaSequence:
    """Scan ``path`` from its last grid point to the left.

    Implemented as the forward scan of the reversed path with indices
    mirrored back; events are returned in increasing time and the one
    nearest the right end is provisional.
    """
    fwd = forward_neveu_pitman(reverse(path), gamma, max_events)
    last = path.n - 1
    pending = None
    if fwd.pending is not None:
        k = last - fwd.pending.index
        pending = ExtremaEvent(k, path.time_of(k), float(path.values[k]), fwd.pending.kind, True)
    return ExtremaSequence(path, fwd.gamma, (last - fwd.index)[::-1].copy(), fwd.kind[::-1].copy(),
                           fwd.provisional[::-1].copy(), (last - fwd.stop_index)[::-1].copy(),
                           fwd.stop_direction[::-1].copy(), pending, fwd.status)


def brute_force_extrema(path: SampledPath, gamma: float) -> ExtremaSequence:
    """All interior grid points testified as Gamma-extrema within the window.

    For each candidate the walk outward stops at the first point that
    either beats the candidate (no testifying endpoint on that side) or
    clears the ``gamma`` margin. That is the definition evaluated
    literally; the worst case is quadratic in the path length.
    """
    gamma = _check_gamma(gamma)
    lab = _brute_force(path.values, gamma)
    idx = np.flatnonzero(lab).astype(np.int64)
    kind = lab[idx].astype(np.int64)
    empty = np.zeros(0, np.int64)
    return ExtremaSequence(path, gamma, idx, kind, np.zeros(idx.size, bool), empty, empty)


def resolve_origin(a1: int, b1: int, gap: float, gamma: float) -> tuple[int, bool, bool, bool]:
    """Settle the two events next to the origin.

    Parameters
    ----------
    a1, b1 : int
        Arrows (+1 max, -1 min) of the first forward event ``u1`` and of
        the first backward event ``v1``.
    gap : float
        ``B(u1) - B(v1)``.
    gamma : float

    Returns
    -------
    label, keep_u, keep_v, degenerate
    """
    if a1 == b1:
        sg = int(np.sign(gap))
        if sg == a1:
            return a1, True, False, False
        if sg == -a1:
            return -a1, False, True, False
        # equal values: keep one copy (the earliest index)
        return 0, False, True, True
    if abs(gap) > gamma:
        return a1, True, True, False
    return -a1, False, False, False


def bilateral_extrema(path: SampledPath, gamma: float) -> tuple[ExtremaSequence, int]:
    """Gamma-extrema of a bilateral path and the Fisher label at the origin.

    The forward scan of ``[0, t_max]`` and the backward scan of
    ``[t_min, 0]`` each leave one unconfirmed event next to the origin,
    ``u1`` (arrow ``a1``) and ``v1`` (arrow ``a1'``). With
    ``gap = B(u1) - B(v1)``:

    * ``a1 == a1'``: the more extreme of the two is kept, and the origin
      label is ``sign(gap)``;
    * ``a1 != a1'`` and ``|gap| > gamma``: both are kept, label ``a1``;
    * ``a1 != a1'`` and ``|gap| <= gamma``: both are dropped, label ``-a1``.

    A tie ``gap == 0`` with equal arrows gives label 0. It happens only on
    a grid, for instance when both scans pick the origin itself (which is
    then an extremum, where the Fisher label is 0 by convention). The
    sequence's ``status`` is then ``'degenerate-origin'``.

    Raises
    ------
    WindowExhausted
        When either side holds no stop time.
    """
    gamma = _check_gamma(gamma)
    k0 = path.origin_index
    if k0 == 0 or k0 == path.n - 1:
        raise WindowExhausted("left" if k0 == 0 else "right", "window must extend on both sides of 0")
    right = forward_neveu_pitman(path.slice(k0, path.n), gamma)
    left = backward_neveu_pitman(path.slice(0, k0 + 1), gamma)
    if not len(right):
        raise WindowExhausted("right")
    if not len(left):
        raise WindowExhausted("left")

    v = path.values
    u1, a1 = int(right.index[0]) + k0, int(right.kind[0])
    v1, b1 = int(left.index[-1]), int(left.kind[-1])
    gap = v[u1] - v[v1]
    label, keep_u, keep_v, degenerate = resolve_origin(a1, b1, gap, gamma)
    status = "degenerate-origin" if degenerate else "ok"

    parts_i = [left.index[:-1]]
    parts_k = [left.kind[:-1]]
    if keep_v:
        parts_i.append(np.array([v1]))
        parts_k.append(np.array([b1]))
    if keep_u:
        parts_i.append(np.array([u1]))
        parts_k.append(np.array([a1]))
    parts_i.append(right.index[1:] + k0)
    parts_k.append(right.kind[1:])
    idx = np.concatenate(parts_i).astype(np.int64)
    kind = np.concatenate(parts_k).astype(np.int64)
    stops = np.concatenate([left.stop_index, right.stop_index + k0]).astype(np.int64)
    dirs = np.concatenate([left.stop_direction, right.stop_direction]).astype(np.int64)
    seq = ExtremaSequence(path, gamma, idx, kind, np.zeros(idx.size, bool), stops, dirs,
                          None, status)
    return seq, label


@dataclass(frozen=True, eq=False)
class FisherTrajectory:
    """Piecewise constant +-1 labelling of time by Gamma-stretches.

    ``labels[i]`` holds on the open interval between ``breakpoints[i-1]``
    and ``breakpoints[i]`` (unbounded at both ends), so there is one more
    label than breakpoints. Breakpoints themselves carry the label 0.
    """

    gamma: float
    breakpoints: np.ndarray
    labels: np.ndarray
    origin_label: int | None = None

    def label_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        pos = np.searchsorted(self.breakpoints, t, side="left")
        lab = self.labels[pos]
        on = np.isin(t, self.breakpoints)
        return np.where(on, 0, lab)


def fisher_trajectory(seq: ExtremaSequence, origin_label: int | None = None) -> FisherTrajectory:
    """Fisher trajectory of an alternating extrema sequence.

    The interval to the left of a maximum is ascending (+1), the interval
    to its right descending (-1); labels alternate from there.
    """
    if not len(seq):
        raise ValueError("the extrema sequence is empty")
    kind = np.asarray(seq.kind, dtype=np.int64)
    labels = np.append(kind, -kind[-1])
    return FisherTrajectory(seq.gamma, np.asarray(seq.time, dtype=float), labels, origin_label)


def write_csv(seq: ExtremaSequence, fh: TextIO) -> None:
    """Write ``index,time,value,kind,provisional`` rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "time", "value", "kind", "provisional"])
    for e in seq.events:
        w.writerow([e.index, repr(e.time), repr(e.value), e.kind_name, str(e.provisional).lower()])
