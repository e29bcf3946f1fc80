"""Coupled path pairs driven by split Poisson streams.

Every reaction k is split into three independent unit-rate processes: channel
1 runs at the minimum of the two intensities and moves both processes,
channel 2 at the excess of the first (fine / exact) process and channel 3 at
the excess of the second (coarse / tau) process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EventBudgetExceeded
from .exact import DEFAULT_MAX_EVENTS
from .model import ReactionNetwork, ScalingProfile, SystemState, mass_action_into
from .parallel import run_chunked
from .streams import CHANNELS, PathKey, _u64, exponential, fill_path_keys, poisson
from .tau import _OVERFLOW, grid_steps


@njit(cache=True, inline="always")
def coupled_step_counts_kernel(lam_f, lam_c, h, keys, counters, counts):
    """Draw the three channel counts of one step for every reaction into counts (K x 3)."""
    for k in range(lam_f.size):
        m = min(lam_f[k], lam_c[k])
        counts[k, 0] = poisson(keys, counters, k * CHANNELS, h * m)
        counts[k, 1] = poisson(keys, counters, k * CHANNELS + 1, h * (lam_f[k] - m))
        counts[k, 2] = poisson(keys, counters, k * CHANNELS + 2, h * (lam_c[k] - m))


@njit(cache=True, nogil=True)
def tau_pair_kernel(nu, zeta, kappa, zf, zc, h, n_steps, M, keys, counters, channel_counts):
    """Advance the fine/coarse pair in place on the fine grid.

    The coarse intensity is refreshed every M fine steps.  Returns nonzero
    on integer overflow.
    """
    K, d = nu.shape
    lam_f = np.empty(K)
    lam_c = np.empty(K)
    counts = np.empty((K, 3), dtype=np.int64)
    for j in range(n_steps):
        if j % M == 0:
            mass_action_into(nu, kappa, zc, lam_c)
        mass_action_into(nu, kappa, zf, lam_f)
        coupled_step_counts_kernel(lam_f, lam_c, h, keys, counters, counts)
        for k in range(K):
            cf = counts[k, 0] + counts[k, 1]
            cc = counts[k, 0] + counts[k, 2]
            for ch in range(3):
                channel_counts[k, ch] += counts[k, ch]
            if cf != 0 or cc != 0:
                for i in range(d):
                    zf[i] += cf * zeta[k, i]
                    zc[i] += cc * zeta[k, i]
        for i in range(d):
            if abs(zf[i]) > _OVERFLOW or abs(zc[i]) > _OVERFLOW:
                return 1
    return 0


@njit(cache=True, nogil=True)
def tau_pair_batch_kernel(nu, zeta, kappa, x0, h, n_steps, M, seed, level, offset, start, stop,
                          fine, coarse, status):
    K, d = nu.shape
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    cc = np.zeros((K, 3), dtype=np.int64)
    zf = np.empty(d, dtype=np.int64)
    zc = np.empty(d, dtype=np.int64)
    for p in range(start, stop):
        fill_path_keys(seed, level, offset + p, K, keys, counters)
        for i in range(d):
            zf[i] = x0[i]
            zc[i] = x0[i]
        status[p] = tau_pair_kernel(nu, zeta, kappa, zf, zc, h, n_steps, M, keys, counters, cc)
        for i in range(d):
            fine[p, i] = zf[i]
            coarse[p, i] = zc[i]


@njit(cache=True, inline="always")
def _split_rates(lam_x, lam_z, rates):
    for k in range(lam_x.size):
        m = min(lam_x[k], lam_z[k])
        rates[k * 3] = m
        rates[k * 3 + 1] = lam_x[k] - m
        rates[k * 3 + 2] = lam_z[k] - m


@njit(cache=True, nogil=True)
def exact_tau_pair_kernel(nu, zeta, kappa, x, z, t_end, h, n_steps, keys, counters,
                          max_events, channel_counts):
    """Next reaction method over the 3K split channels.

    Returns (events, status); status 1 = event budget, 2 = overflow.
    """
    K, d = nu.shape
    C = 3 * K
    lam_x = np.empty(K)
    lam_z = np.empty(K)
    rates = np.empty(C)
    T = np.zeros(C)
    P = np.empty(C)
    for j in range(C):
        P[j] = exponential(keys, counters, j, 1.0)
    mass_action_into(nu, kappa, x, lam_x)
    mass_action_into(nu, kappa, z, lam_z)
    _split_rates(lam_x, lam_z, rates)
    t = 0.0
    step = 0
    t_grid = h
    events = 0
    while True:
        dt = math.inf
        mu = -1
        for j in range(C):
            if rates[j] > 0.0:
                s = (P[j] - T[j]) / rates[j]
                if s < dt:
                    dt = s
                    mu = j
        if t + dt >= t_grid:
            span = t_grid - t
            for j in range(C):
                T[j] += rates[j] * span
            step += 1
            if step >= n_steps:
                break
            t = t_grid
            t_grid = (step + 1) * h
            mass_action_into(nu, kappa, z, lam_z)
            _split_rates(lam_x, lam_z, rates)
            continue
        for j in range(C):
            T[j] += rates[j] * dt
        t += dt
        k = mu // 3
        ch = mu - 3 * k
        if ch != 2:
            for i in range(d):
                x[i] += zeta[k, i]
        if ch != 1:
            for i in range(d):
                z[i] += zeta[k, i]
                if abs(z[i]) > _OVERFLOW:
                    return events, 2
        channel_counts[k, ch] += 1
        events += 1
        T[mu] = P[mu]
        P[mu] += exponential(keys, counters, mu, 1.0)
        if ch != 2:
            mass_action_into(nu, kappa, x, lam_x)
            _split_rates(lam_x, lam_z, rates)
        if events >= max_events:
            return events, 1
    return events, 0


@njit(cache=True, nogil=True)
def exact_tau_batch_kernel(nu, zeta, kappa, x0, t_end, h, n_steps, seed, level, offset, start, stop,
                           max_events, exact, tau, events, status):
    K, d = nu.shape
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    cc = np.zeros((K, 3), dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    z = np.empty(d, dtype=np.int64)
    for p in range(start, stop):
        fill_path_keys(seed, level, offset + p, K, keys, counters)
        for i in range(d):
            x[i] = x0[i]
            z[i] = x0[i]
        ev, st = exact_tau_pair_kernel(nu, zeta, kappa, x, z, t_end, h, n_steps, keys, counters,
                                       max_events, cc)
        for i in range(d):
            exact[p, i] = x[i]
            tau[p, i] = z[i]
        events[p] = ev
        status[p] = st


@njit(cache=True, nogil=True)
def _step_sample_kernel(lam_f, lam_c, h, seed, level, n, out):
    K = lam_f.size
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    counts = np.empty((K, 3), dtype=np.int64)
    for p in range(n):
        fill_path_keys(seed, level, p, K, keys, counters)
        coupled_step_counts_kernel(lam_f, lam_c, h, keys, counters, counts)
        for k in range(K):
            for ch in range(3):
                out[p, k, ch] = counts[k, ch]


@dataclass
class CoupledTauPair:
    level: int
    M: int
    h_fine: float
    fine: SystemState
    coarse: SystemState
    channel_counts: np.ndarray
    step_count: int

    @property
    def cost(self) -> int:
        return self.step_count * self.channel_counts.shape[0]


@dataclass
class CoupledExactTauPair:
    level: int
    h: float
    exact: SystemState
    tau: SystemState
    channel_counts: np.ndarray
    event_count: int
    step_count: int

    @property
    def cost(self) -> int:
        return self.event_count + self.step_count * self.channel_counts.shape[0]


@dataclass
class PairBatch:
    """Terminal states of many coupled pairs: ``fine`` is the finer (or exact) leg."""

    kind: str
    h: float
    fine: np.ndarray
    coarse: np.ndarray
    costs: np.ndarray

    @property
    def cost(self) -> int:
        return int(self.costs.sum())


def _path_streams(network, key: PathKey):
    n = network.K * CHANNELS
    keys = np.empty(n, dtype=np.uint64)
    counters = np.empty(n, dtype=np.uint64)
    fill_path_keys(_u64(key.master_seed), _u64(key.level), key.path_index, network.K,
                   keys, counters)
    return keys, counters


def _check_M(M):
    if int(M) != M or M < 1:
        raise ValueError(f"refinement factor must be a positive integer, got {M}")


def coupled_tau_pair(network: ReactionNetwork, scaling: ScalingProfile | None,
                     initial: SystemState, level: int, M: int, t_end: float,
                     streams: PathKey = PathKey(), h: float | None = None) -> CoupledTauPair:
    """One (Z_level, Z_level-1) pair; ``h`` overrides the fine step t_end * M**-level."""
    if int(M) != M or M < 2:
        raise ValueError(f"refinement factor must be an integer >= 2, got {M}")
    h = t_end * float(M) ** -level if h is None else float(h)
    n_steps = grid_steps(t_end, h)
    keys, counters = _path_streams(network, streams)
    zf = initial.counts.copy()
    zc = initial.counts.copy()
    counts = np.zeros((network.K, 3), dtype=np.int64)
    if tau_pair_kernel(network.nu, network.zeta, network.kappa, zf, zc, h, n_steps, int(M),
                       keys, counters, counts):
        raise OverflowError("tau-leap state left the int64 range")
    return CoupledTauPair(level, int(M), h, SystemState(zf), SystemState(zc), counts, n_steps)


def coupled_tau_batch(network: ReactionNetwork, initial: SystemState, h: float, M: int,
                      t_end: float, n_pairs: int, seed: int = 0, level: int = 0,
                      workers: int | None = 1, path_start: int = 0) -> PairBatch:
    """Many coupled tau/tau pairs with fine step h.  M = 1 couples a path with itself."""
    _check_M(M)
    n_steps = grid_steps(t_end, h)
    d = network.d
    fine = np.empty((n_pairs, d), dtype=np.int64)
    coarse = np.empty((n_pairs, d), dtype=np.int64)
    status = np.zeros(n_pairs, dtype=np.int64)
    nu, zeta, kappa = network.nu, network.zeta, network.kappa
    x0 = initial.counts.copy()
    s64, l64 = _u64(seed), _u64(level)

    def work(start, stop):
        tau_pair_batch_kernel(nu, zeta, kappa, x0, float(h), n_steps, int(M), s64, l64,
                              path_start, start, stop, fine, coarse, status)

    run_chunked(work, n_pairs, workers)
    if status.any():
        raise OverflowError("tau-leap state left the int64 range")
    costs = np.full(n_pairs, n_steps * network.K, dtype=np.int64)
    return PairBatch("tau-tau", float(h), fine, coarse, costs)


def coupled_exact_tau(network: ReactionNetwork, scaling: ScalingProfile | None,
                      initial: SystemState, level: int, t_end: float,
                      streams: PathKey = PathKey(), M: int = 3, h: float | None = None,
                      max_events: int = DEFAULT_MAX_EVENTS) -> CoupledExactTauPair:
    h = t_end * float(M) ** -level if h is None else float(h)
    n_steps = grid_steps(t_end, h)
    if np.any(initial.counts < 0):
        raise ValueError("initial state must be admissible")
    keys, counters = _path_streams(network, streams)
    x = initial.counts.copy()
    z = initial.counts.copy()
    counts = np.zeros((network.K, 3), dtype=np.int64)
    ev, status = exact_tau_pair_kernel(network.nu, network.zeta, network.kappa, x, z,
                                       float(t_end), h, n_steps, keys, counters,
                                       int(max_events), counts)
    if status == 1:
        raise EventBudgetExceeded(f"coupled exact path exceeded {max_events} events")
    if status == 2:
        raise OverflowError("tau-leap state left the int64 range")
    return CoupledExactTauPair(level, h, SystemState(x), SystemState(z), counts, int(ev), n_steps)


def coupled_exact_tau_batch(network: ReactionNetwork, initial: SystemState, h: float,
                            t_end: float, n_pairs: int, seed: int = 0, level: int = 0,
                            workers: int | None = 1, max_events: int = DEFAULT_MAX_EVENTS,
                            path_start: int = 0) -> PairBatch:
    n_steps = grid_steps(t_end, h)
    if np.any(initial.counts < 0):
        raise ValueError("initial state must be admissible")
    d = network.d
    exact = np.empty((n_pairs, d), dtype=np.int64)
    tau = np.empty((n_pairs, d), dtype=np.int64)
    events = np.empty(n_pairs, dtype=np.int64)
    status = np.zeros(n_pairs, dtype=np.int64)
    nu, zeta, kappa = network.nu, network.zeta, network.kappa
    x0 = initial.counts.copy()
    s64, l64 = _u64(seed), _u64(level)

    def work(start, stop):
        exact_tau_batch_kernel(nu, zeta, kappa, x0, float(t_end), float(h), n_steps, s64, l64,
                               path_start, start, stop, int(max_events), exact, tau, events, status)

    run_chunked(work, n_pairs, workers)
    if np.any(status == 1):
        raise EventBudgetExceeded(f"a coupled exact path exceeded {max_events} events")
    if np.any(status == 2):
        raise OverflowError("tau-leap state left the int64 range")
    return PairBatch("exact-tau", float(h), exact, tau, events + n_steps * network.K)


def coupled_step_samples(network: ReactionNetwork, fine: SystemState, coarse: SystemState,
                         h: float, n: int, seed: int = 0, level: int = 0) -> np.ndarray:
    """Channel counts (n x K x 3) of one coupled step from fixed fine/coarse states.

    Each sample uses the streams of its own path index; this is the step
    routine the coupled tau/tau simulator applies on every fine step.
    """
    lam_f = np.empty(network.K)
    lam_c = np.empty(network.K)
    mass_action_into(network.nu, network.kappa, fine.counts, lam_f)
    mass_action_into(network.nu, network.kappa, coarse.counts, lam_c)
    out = np.empty((n, network.K, 3), dtype=np.int64)
    _step_sample_kernel(lam_f, lam_c, float(h), _u64(seed), _u64(level), n, out)
    return out
