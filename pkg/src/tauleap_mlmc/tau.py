"""Fixed-step tau-leaping.

Intensities are frozen at the start of each step; per step and reaction a
Poisson(h * lambda_k(Z)) count is drawn from stream channel 1.  Rates are
clamped to zero off the admissible orthant, but the state itself may go
negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidGrid
from .model import ReactionNetwork, ScalingProfile, SystemState, mass_action_into
from .parallel import run_chunked
from .streams import CHANNELS, PathKey, _u64, fill_path_keys, poisson

GRID_TOL = 1e-9
_OVERFLOW = 2**62


def grid_steps(t_end: float, h: float) -> int:
    """Number of steps of size h in [0, t_end]; InvalidGrid unless it is an integer."""
    if not h > 0:
        raise InvalidGrid(f"step size must be positive, got {h}")
    ratio = t_end / h
    n = round(ratio)
    if n < 1 or abs(ratio - n) > GRID_TOL:
        raise InvalidGrid(f"t_end / h = {ratio!r} is not a positive integer")
    return int(n)


@njit(cache=True, nogil=True)
def tau_path_kernel(nu, zeta, kappa, z, h, n_steps, keys, counters, firings, rec):
    """Advance ``z`` in place by n_steps leaps; returns a nonzero status on overflow."""
    K, d = nu.shape
    a = np.empty(K)
    counts = np.empty(K, dtype=np.int64)
    record = rec.shape[0] > 0
    if record:
        for i in range(d):
            rec[0, i] = z[i]
    for j in range(n_steps):
        mass_action_into(nu, kappa, z, a)
        for k in range(K):
            counts[k] = poisson(keys, counters, k * CHANNELS, a[k] * h)
        for k in range(K):
            c = counts[k]
            if c != 0:
                firings[k] += c
                for i in range(d):
                    z[i] += c * zeta[k, i]
        for i in range(d):
            if z[i] > _OVERFLOW or z[i] < -_OVERFLOW:
                return 1
        if record:
            for i in range(d):
                rec[j + 1, i] = z[i]
    return 0


@njit(cache=True, nogil=True)
def tau_batch_kernel(nu, zeta, kappa, x0, h, n_steps, seed, level, offset, start, stop,
                     finals, firings, status):
    K, d = nu.shape
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    rec = np.zeros((0, d), dtype=np.int64)
    z = np.empty(d, dtype=np.int64)
    for p in range(start, stop):
        fill_path_keys(seed, level, offset + p, K, keys, counters)
        for i in range(d):
            z[i] = x0[i]
        status[p] = tau_path_kernel(nu, zeta, kappa, z, h, n_steps, keys, counters, firings[p], rec)
        for i in range(d):
            finals[p, i] = z[i]


@dataclass
class TauPath:
    h: float
    final: SystemState
    firings: np.ndarray
    step_count: int
    steps: np.ndarray | None = None

    @property
    def cost(self) -> int:
        return self.step_count * len(self.firings)


@dataclass
class TauBatch:
    h: float
    finals: np.ndarray
    firings: np.ndarray
    step_count: int

    @property
    def cost(self) -> int:
        n, K = self.firings.shape
        return n * self.step_count * K


def simulate_tau(network: ReactionNetwork, scaling: ScalingProfile | None, initial: SystemState,
                 h: float, t_end: float, streams: PathKey = PathKey(),
                 record: bool = False) -> TauPath:
    n_steps = grid_steps(t_end, h)
    K, d = network.K, network.d
    keys = np.empty(K * CHANNELS, dtype=np.uint64)
    counters = np.empty(K * CHANNELS, dtype=np.uint64)
    fill_path_keys(_u64(streams.master_seed), _u64(streams.level), streams.path_index, K,
                   keys, counters)
    z = initial.counts.copy()
    firings = np.zeros(K, dtype=np.int64)
    rec = np.zeros((n_steps + 1 if record else 0, d), dtype=np.int64)
    if tau_path_kernel(network.nu, network.zeta, network.kappa, z, float(h), n_steps,
                       keys, counters, firings, rec):
        raise OverflowError("tau-leap state left the int64 range")
    return TauPath(float(h), SystemState(z), firings, n_steps, rec if record else None)


def simulate_tau_batch(network: ReactionNetwork, initial: SystemState, h: float, t_end: float,
                       n_paths: int, seed: int = 0, level: int = 0,
                       workers: int | None = 1, path_start: int = 0) -> TauBatch:
    n_steps = grid_steps(t_end, h)
    K, d = network.K, network.d
    nu, zeta, kappa = network.nu, network.zeta, network.kappa
    finals = np.empty((n_paths, d), dtype=np.int64)
    firings = np.zeros((n_paths, K), dtype=np.int64)
    status = np.zeros(n_paths, dtype=np.int64)
    s64, l64 = _u64(seed), _u64(level)
    x0 = initial.counts.copy()

    def work(start, stop):
        tau_batch_kernel(nu, zeta, kappa, x0, float(h), n_steps, s64, l64, path_start, start,
                         stop, finals, firings, status)

    run_chunked(work, n_paths, workers)
    if status.any():
        raise OverflowError("tau-leap state left the int64 range")
    return TauBatch(float(h), finals, firings, n_steps)
