"""Exact path simulation with the next reaction method.

Each reaction owns a unit-rate Poisson process (stream channel 1).  ``T[k]``
is the internal time already consumed on that clock and ``P[k]`` its next
firing; the channel fires after ``(P[k] - T[k]) / a[k]`` of real time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EventBudgetExceeded
from .model import ReactionNetwork, ScalingProfile, SystemState, mass_action_into
from .parallel import run_chunked
from .streams import CHANNELS, PathKey, _u64, exponential, fill_path_keys

DEFAULT_MAX_EVENTS = 10**9

@njit(cache=True, inline="always")
def _sq_dev(x, inv_scale, ref, t, ref_h):
    n_ref = ref.shape[0]
    u = t / ref_h
    i0 = int(math.floor(u))
    if i0 >= n_ref - 1:
        i0 = n_ref - 2
    f = u - i0
    s = 0.0
    for i in range(x.size):
        r = ref[i0, i] * (1.0 - f) + ref[i0 + 1, i] * f
        e = x[i] * inv_scale[i] - r
        s += e * e
    return s


@njit(cache=True, nogil=True)
def exact_path_kernel(nu, zeta, kappa, x, t_end, keys, counters, max_events,
                      rec_step, rec, ref, ref_h, inv_scale, firings):
    """Advance ``x`` in place to ``t_end``.

    Returns (events, status, sup_sq_dev).  ``rec`` (n_rec x d) receives the
    state at times j*rec_step; ``ref`` (n_ref x d) is a scaled reference
    trajectory on a grid of step ``ref_h`` against which the squared sup
    deviation is tracked.  Either may have zero rows.
    """
    K, d = nu.shape
    a = np.empty(K)
    T = np.zeros(K)
    P = np.empty(K)
    for k in range(K):
        P[k] = exponential(keys, counters, k * CHANNELS, 1.0)
    mass_action_into(nu, kappa, x, a)
    n_rec = rec.shape[0]
    n_ref = ref.shape[0]
    t = 0.0
    events = 0
    ri = 0
    gi = 0
    sup = 0.0
    status = 0
    while True:
        dt = math.inf
        mu = -1
        for k in range(K):
            if a[k] > 0.0:
                s = (P[k] - T[k]) / a[k]
                if s < dt:
                    dt = s
                    mu = k
        t_next = t + dt
        stop = t_next > t_end
        if stop:
            while ri < n_rec and ri * rec_step <= t_end * (1.0 + 1e-12):
                for i in range(d):
                    rec[ri, i] = x[i]
                ri += 1
            while gi < n_ref:
                s = 0.0
                for i in range(d):
                    e = x[i] * inv_scale[i] - ref[gi, i]
                    s += e * e
                if s > sup:
                    sup = s
                gi += 1
            break
        while ri < n_rec and ri * rec_step < t_next:
            for i in range(d):
                rec[ri, i] = x[i]
            ri += 1
        if n_ref > 0:
            while gi < n_ref and gi * ref_h < t_next:
                s = 0.0
                for i in range(d):
                    e = x[i] * inv_scale[i] - ref[gi, i]
                    s += e * e
                if s > sup:
                    sup = s
                gi += 1
            s = _sq_dev(x, inv_scale, ref, t_next, ref_h)
            if s > sup:
                sup = s
        for k in range(K):
            T[k] += a[k] * dt
        t = t_next
        for i in range(d):
            x[i] += zeta[mu, i]
        firings[mu] += 1
        events += 1
        T[mu] = P[mu]
        P[mu] += exponential(keys, counters, mu * CHANNELS, 1.0)
        if n_ref > 0:
            s = _sq_dev(x, inv_scale, ref, t, ref_h)
            if s > sup:
                sup = s
        mass_action_into(nu, kappa, x, a)
        if events >= max_events:
            status = 1
            break
    return events, status, sup


@njit(cache=True, nogil=True)
def exact_batch_kernel(nu, zeta, kappa, x0, t_end, seed, level, offset, start, stop, max_events,
                       ref, ref_h, inv_scale, finals, events, firings, sups, status):
    K, d = nu.shape
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    rec = np.zeros((0, d), dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    for p in range(start, stop):
        fill_path_keys(seed, level, offset + p, K, keys, counters)
        for i in range(d):
            x[i] = x0[i]
        ev, st, sup = exact_path_kernel(nu, zeta, kappa, x, t_end, keys, counters, max_events,
                                        1.0, rec, ref, ref_h, inv_scale, firings[p])
        for i in range(d):
            finals[p, i] = x[i]
        events[p] = ev
        sups[p] = sup
        status[p] = st


@dataclass
class ExactPath:
    final: SystemState
    firings: np.ndarray
    event_count: int
    times: np.ndarray | None = None
    trajectory: np.ndarray | None = None


@dataclass
class ExactBatch:
    """Terminal states of many independent exact paths (rows indexed by path)."""

    finals: np.ndarray
    events: np.ndarray
    firings: np.ndarray
    sup_sq_dev: np.ndarray | None = None

    @property
    def cost(self) -> int:
        return int(self.events.sum())


def _check_start(initial: SystemState, t_end: float):
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if np.any(initial.counts < 0):
        raise ValueError("initial state must be admissible (all counts >= 0)")


def simulate_exact(network: ReactionNetwork, scaling: ScalingProfile | None, initial: SystemState,
                   t_end: float, streams: PathKey = PathKey(), record: float | None = None,
                   max_events: int = DEFAULT_MAX_EVENTS) -> ExactPath:
    """One exact path; ``record`` is an optional down-sampling grid step."""
    _check_start(initial, t_end)
    K, d = network.K, network.d
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    fill_path_keys(_u64(streams.master_seed), _u64(streams.level), streams.path_index, K,
                   keys, counters)
    if record:
        n_rec = int(math.floor(t_end / record * (1 + 1e-12))) + 1
        rec = np.zeros((n_rec, d), dtype=np.int64)
    else:
        rec = np.zeros((0, d), dtype=np.int64)
    x = initial.counts.copy()
    firings = np.zeros(K, dtype=np.int64)
    ev, status, _ = exact_path_kernel(network.nu, network.zeta, network.kappa, x, float(t_end),
                                      keys, counters, int(max_events), float(record or 1.0), rec,
                                      np.zeros((0, d)), 1.0, np.ones(d), firings)
    if status:
        raise EventBudgetExceeded(f"exact path exceeded {max_events} events")
    times = np.arange(rec.shape[0]) * record if record else None
    return ExactPath(SystemState(x), firings, int(ev), times, rec if record else None)


def simulate_exact_batch(network: ReactionNetwork, initial: SystemState, t_end: float,
                         n_paths: int, seed: int = 0, level: int = 0, workers: int | None = 1,
                         max_events: int = DEFAULT_MAX_EVENTS, reference=None,
                         inv_scale=None, path_start: int = 0) -> ExactBatch:
    """Paths path_start .. path_start+n_paths-1 of the stream family (seed, level).

    ``reference`` = (scaled trajectory, grid step) additionally records the
    squared sup deviation of each scaled path from that trajectory.
    """
    _check_start(initial, t_end)
    K, d = network.K, network.d
    nu, zeta, kappa = network.nu, network.zeta, network.kappa
    finals = np.empty((n_paths, d), dtype=np.int64)
    events = np.empty(n_paths, dtype=np.int64)
    firings = np.zeros((n_paths, K), dtype=np.int64)
    sups = np.zeros(n_paths)
    status = np.zeros(n_paths, dtype=np.int64)
    if reference is None:
        ref, ref_h = np.zeros((0, d)), 1.0
    else:
        ref, ref_h = np.ascontiguousarray(reference[0], dtype=float), float(reference[1])
    inv = np.ones(d) if inv_scale is None else np.asarray(inv_scale, dtype=float)
    s64, l64 = _u64(seed), _u64(level)
    x0 = initial.counts.copy()

    def work(start, stop):
        exact_batch_kernel(nu, zeta, kappa, x0, float(t_end), s64, l64, path_start, start, stop,
                           int(max_events), ref, ref_h, inv, finals, events, firings, sups, status)

    run_chunked(work, n_paths, workers)
    if status.any():
        raise EventBudgetExceeded(f"an exact path exceeded {max_events} events")
    return ExactBatch(finals, events, firings, sups if reference is not None else None)


def estimate_event_rate(network: ReactionNetwork, scaling: ScalingProfile | None,
                        initial: SystemState) -> float:
    """Total intensity at the initial state: expected jumps per unit time at t=0."""
    a = np.empty(network.K)
    mass_action_into(network.nu, network.kappa, initial.counts, a)
    return float(a.sum())
