"""Counter-based random streams and exact Poisson / exponential variates.

A stream is identified by the key (master_seed, level, path_index, reaction,
channel).  The key is hashed into a 64-bit word and draw number ``n`` of the
stream is ``mix64(key + n * GOLDEN)``, i.e. SplitMix64 seeded with the hashed
key.  Any draw is a pure function of key and counter, so paths can be
simulated in any order or on any number of workers with identical results.

Inside numba kernels a set of streams is two uint64 arrays (keys, counters)
indexed by ``reaction * 3 + channel - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidMean, InvalidRate

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0

INVERSION_LIMIT = 10.0
CHANNELS = 3
_MASK64 = (1 << 64) - 1


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def hash_key(seed, level, path, reaction, channel):
    """Fold the five key fields (all uint64) into one stream key."""
    h = mix64(seed + _GOLDEN)
    h = mix64(h ^ (level + _GOLDEN))
    h = mix64(h ^ (path * _M1 + _GOLDEN))
    h = mix64(h ^ (reaction * _M2 + _GOLDEN))
    h = mix64(h ^ (channel + _GOLDEN))
    return h


@njit(cache=True)
def fill_path_keys(seed, level, path, n_reactions, keys, counters):
    for k in range(n_reactions):
        for ch in range(CHANNELS):
            j = k * CHANNELS + ch
            keys[j] = hash_key(seed, level, np.uint64(path), np.uint64(k), np.uint64(ch + 1))
            counters[j] = np.uint64(0)


@njit(cache=True, inline="always")
def next_u64(keys, counters, j):
    counters[j] += _ONE
    return mix64(keys[j] + counters[j] * _GOLDEN)


@njit(cache=True, inline="always")
def uniform(keys, counters, j):
    """Uniform on the open interval (0, 1)."""
    return (np.float64(next_u64(keys, counters, j) >> _S11) + 0.5) * _TWO_M53


@njit(cache=True)
def exponential(keys, counters, j, rate):
    return -math.log(uniform(keys, counters, j)) / rate


@njit(cache=True)
def _poisson_inversion(keys, counters, j, mean):
    u = uniform(keys, counters, j)
    p = math.exp(-mean)
    s = p
    x = 0
    while u > s:
        x += 1
        p *= mean / x
        if p == 0.0:
            break
        s += p
    return x


@njit(cache=True)
def _poisson_ptrs(keys, counters, j, lam):
    # Hormann's transformed rejection with squeeze (PTRS); exact for lam >= 10.
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        U = uniform(keys, counters, j) - 0.5
        V = uniform(keys, counters, j)
        us = 0.5 - abs(U)
        k = math.floor((2.0 * a / us + b) * U + lam + 0.43)
        if us >= 0.07 and V <= vr:
            return np.int64(k)
        if k < 0 or (us < 0.013 and V > us):
            continue
        if (math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return np.int64(k)


@njit(cache=True)
def poisson(keys, counters, j, mean):
    """Exact Poisson variate; a zero mean consumes no draw."""
    if mean <= 0.0:
        return np.int64(0)
    if mean < INVERSION_LIMIT:
        return np.int64(_poisson_inversion(keys, counters, j, mean))
    return _poisson_ptrs(keys, counters, j, mean)


@njit(cache=True)
def _poisson_many(keys, counters, means, out):
    for i in range(means.size):
        out[i] = poisson(keys, counters, 0, means[i])


@njit(cache=True)
def _exponential_many(keys, counters, rate, out):
    for i in range(out.size):
        out[i] = exponential(keys, counters, 0, rate)


@njit(cache=True)
def _uniform_many(keys, counters, out):
    for i in range(out.size):
        out[i] = uniform(keys, counters, 0)


def _u64(value: int) -> np.uint64:
    return np.uint64(int(value) & _MASK64)


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    level: int
    path_index: int
    reaction: int
    channel: int = 1

    def __post_init__(self):
        if self.channel not in (1, 2, 3):
            raise ValueError("channel must be 1, 2 or 3")

    def hashed(self) -> np.uint64:
        return hash_key(_u64(self.master_seed), _u64(self.level), _u64(self.path_index),
                        _u64(self.reaction), _u64(self.channel))


class Stream:
    """One reproducible variate stream, owned by a single consumer."""

    def __init__(self, key: StreamKey):
        self.key = key
        self._keys = np.array([key.hashed()], dtype=np.uint64)
        self._counters = np.zeros(1, dtype=np.uint64)

    @property
    def position(self) -> int:
        return int(self._counters[0])

    def uniform(self, size=None):
        out = np.empty(1 if size is None else size)
        _uniform_many(self._keys, self._counters, out.reshape(-1))
        return float(out[0]) if size is None else out

    def poisson(self, mean, size=None):
        return poisson_sample(self, mean, size)

    def exponential(self, rate, size=None):
        return exponential_sample(self, rate, size)


def stream_for(key: StreamKey) -> Stream:
    return Stream(key)


def poisson_sample(stream: Stream, mean, size=None):
    means = np.asarray(mean, dtype=float)
    if not np.all(np.isfinite(means)) or np.any(means < 0):
        raise InvalidMean(f"Poisson mean must be finite and nonnegative, got {mean!r}")
    if size is None and means.ndim == 0:
        out = np.empty(1, dtype=np.int64)
        _poisson_many(stream._keys, stream._counters, means.reshape(1), out)
        return int(out[0])
    shape = size if size is not None else means.shape
    flat = np.broadcast_to(means, shape).reshape(-1).copy()
    out = np.empty(flat.size, dtype=np.int64)
    _poisson_many(stream._keys, stream._counters, flat, out)
    return out.reshape(shape)


def exponential_sample(stream: Stream, rate, size=None):
    rate = float(rate)
    if not rate > 0 or not math.isfinite(rate):
        raise InvalidRate(f"exponential rate must be positive and finite, got {rate!r}")
    out = np.empty(1 if size is None else size)
    _exponential_many(stream._keys, stream._counters, rate, out.reshape(-1))
    return float(out[0]) if size is None else out


def derive_seed(master_seed: int, tag: int) -> int:
    """A child master seed, used to keep pilot runs off the production streams."""
    return int(hash_key(_u64(master_seed), _u64(tag), _u64(0), _u64(0), _u64(0)))


@dataclass(frozen=True)
class PathKey:
    """The per-path part of a StreamKey; reaction and channel are filled in by the simulators."""

    master_seed: int = 0
    level: int = 0
    path_index: int = 0

    def stream(self, reaction: int, channel: int = 1) -> Stream:
        return Stream(StreamKey(self.master_seed, self.level, self.path_index, reaction, channel))
