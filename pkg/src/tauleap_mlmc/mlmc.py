"""Biased and unbiased multilevel tau-leaping estimators.

Level l uses step h_l = T * M**-l.  The base level averages single tau paths,
interior levels average coupled tau/tau differences and the unbiased
estimator adds a correction level of coupled exact/tau differences at h_L.
Each level draws from its own StreamKey level field, so level estimates are
independent and their variances add.
"""
from __future__ import annotations

import logging
import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .coupling import coupled_exact_tau_batch, coupled_tau_batch
from .errors import AllocationShortfall, DegeneratePilot, ScheduleOverflow
from .model import ReactionNetwork, ScalingProfile, SystemState, exact_cost_estimate
from .streams import derive_seed
from .tau import simulate_tau_batch

log = logging.getLogger(__name__)

MAX_LEVEL = 60
EXACT_LEVEL = -1
PILOT_PATHS = 100
_PILOT_TAG = 0x70696C6F74


@dataclass(frozen=True)
class LevelSchedule:
    T: float
    M: int
    l0: int
    L: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("refinement factor M must be an integer >= 2")
        if self.l0 > self.L:
            raise ValueError("l0 must not exceed L")

    def h(self, level: int) -> float:
        return self.T * float(self.M) ** -level

    @property
    def levels(self) -> range:
        return range(self.l0, self.L + 1)

    @property
    def h_L(self) -> float:
        return self.h(self.L)


def build_schedule(T: float, M: int, eps: float, theta: float = 1.0) -> LevelSchedule:
    """Smallest L with T * M**-L <= theta * eps, and l0 = 0."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not theta > 0:
        raise ValueError("theta must be positive")
    if int(M) != M or M < 2:
        raise ValueError("refinement factor M must be an integer >= 2")
    target = theta * eps * (1 + 1e-12)
    L = 0
    while T * float(M) ** -L > target:
        L += 1
        if L > MAX_LEVEL:
            raise ScheduleOverflow(f"more than {MAX_LEVEL} levels needed for eps={eps}")
    return LevelSchedule(float(T), int(M), 0, L)


@dataclass(frozen=True)
class Observable:
    """Affine functional f(x) = offset + sum_i coeffs[i] * x_i of the scaled state."""

    coeffs: tuple[float, ...]
    offset: float = 0.0
    label: str = ""

    @classmethod
    def coordinate(cls, network: ReactionNetwork, name: str) -> "Observable":
        coeffs = [0.0] * network.d
        coeffs[network.index(name)] = 1.0
        return cls(tuple(coeffs), 0.0, f"X[{name}]")

    @classmethod
    def constant(cls, network: ReactionNetwork, value: float) -> "Observable":
        return cls((0.0,) * network.d, float(value), f"const:{value}")

    @classmethod
    def parse(cls, text: str, network: ReactionNetwork) -> "Observable":
        text = text.strip()
        m = re.fullmatch(r"X\[\s*([A-Za-z_][\w]*)\s*\]", text)
        if m:
            if m.group(1) not in network.species:
                raise ValueError(f"unknown species {m.group(1)!r} in observable")
            return cls.coordinate(network, m.group(1))
        if text.startswith("lin:"):
            coeffs = tuple(float(v) for v in text[4:].split(","))
            if len(coeffs) != network.d:
                raise ValueError(f"lin: observable needs {network.d} coefficients")
            return cls(coeffs, 0.0, text)
        raise ValueError(f"cannot parse observable {text!r}; use X[name] or lin:a1,a2,...")

    @property
    def deriv_bound(self) -> float:
        return max(abs(a) for a in self.coeffs)

    def __call__(self, counts: np.ndarray, scaling: ScalingProfile) -> np.ndarray:
        w = np.asarray(self.coeffs) * scaling.inv_scale
        return self.offset + np.asarray(counts, dtype=float) @ w


def _fsum_stats(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1) if n > 1 else math.nan
    return mean, var


@dataclass
class LevelStatistics:
    level: int | str
    h: float
    n: int
    mean: float
    var: float
    cost: int
    values: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_values(cls, level, h, values, cost) -> "LevelStatistics":
        values = np.asarray(values, dtype=float)
        mean, var = _fsum_stats(values)
        return cls(level, float(h), len(values), mean, var, int(cost), values)

    def extend(self, other: "LevelStatistics") -> "LevelStatistics":
        return LevelStatistics.from_values(self.level, self.h,
                                           np.concatenate([self.values, other.values]),
                                           self.cost + other.cost)

    @property
    def cost_per_path(self) -> float:
        return self.cost / self.n

    def as_dict(self) -> dict:
        return {"id": self.level, "h": self.h, "n": self.n, "mean": self.mean,
                "var": self.var, "cost": self.cost}


@dataclass
class MlmcEstimate:
    estimate: float
    variance: float
    eps: float
    kind: str
    levels: list[LevelStatistics]
    total_cost: int
    schedule: LevelSchedule
    pilot_cost: int = 0
    shortfall: bool = False

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance)

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "variance": self.variance, "eps": self.eps,
                "kind": self.kind, "levels": [s.as_dict() for s in self.levels],
                "total_cost": self.total_cost}


def allocate_paper(schedule: LevelSchedule, scaling: ScalingProfile, eps: float,
                   calibration: float, unbiased: bool = False) -> list[int]:
    """Even variance split: n_0 ~ (levels) / eps**2, n_l ~ (levels) h_l / eps**2.

    Returns one n per tau level and, when ``unbiased``, a final n_E.  The
    unbiased estimator has L + 2 levels in total and uses that count throughout.
    """
    if not calibration > 0:
        raise ValueError("calibration constant must be positive")
    count = (schedule.L + 2) if unbiased else (schedule.L - schedule.l0 + 1)
    base = calibration * scaling.N ** (scaling.gamma - scaling.rho) * count / eps**2
    ns = [base]
    ns += [base * schedule.h(l) for l in range(schedule.l0 + 1, schedule.L + 1)]
    if unbiased:
        ns.append(base * schedule.h_L)
    return [max(2, math.ceil(v)) for v in ns]


def allocate_adaptive(pilot: list[LevelStatistics], eps: float) -> list[int]:
    """Work-minimising split n_l = eps**-2 sqrt(V_l / c_l) sum_j sqrt(V_j c_j)."""
    V = np.array([s.var for s in pilot], dtype=float)
    if any(s.n < 2 for s in pilot) or not np.all(np.isfinite(V)):
        raise DegeneratePilot("pilot variances must be finite, from at least 2 paths per level")
    c = np.array([s.cost_per_path for s in pilot], dtype=float)
    c = np.maximum(c, 1e-300)
    total = float(np.sum(np.sqrt(V * c)))
    n = np.sqrt(V / c) * total / eps**2
    return [max(2, math.ceil(v)) for v in n]


def estimate_level(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
                   level: int, n: int, f: Observable, seed: int, schedule: LevelSchedule,
                   path_start: int = 0, workers: int | None = 1) -> LevelStatistics:
    """Base level: f(Z_l0(T)).  Interior level: f(Z_l(T)) - f(Z_{l-1}(T)) over coupled pairs.

    Paths ``path_start .. path_start + n - 1`` of the level's stream family are
    used, so successive calls extend one sample without overlap.
    """
    h = schedule.h(level)
    if level == schedule.l0:
        batch = simulate_tau_batch(network, initial, h, schedule.T, n, seed, level, workers,
                                   path_start)
        return LevelStatistics.from_values(level, h, f(batch.finals, scaling), batch.cost)
    if n < 2:
        raise ValueError("interior levels need at least 2 pairs")
    pairs = coupled_tau_batch(network, initial, h, schedule.M, schedule.T, n, seed, level,
                              workers, path_start)
    values = f(pairs.fine, scaling) - f(pairs.coarse, scaling)
    return LevelStatistics.from_values(level, h, values, pairs.cost)


def estimate_exact_correction(network: ReactionNetwork, scaling: ScalingProfile,
                              initial: SystemState, L: int, n_E: int, f: Observable, seed: int,
                              schedule: LevelSchedule, path_start: int = 0,
                              workers: int | None = 1) -> LevelStatistics:
    """Mean of f(X(T)) - f(Z_L(T)) over coupled exact/tau pairs."""
    if n_E < 2:
        raise ValueError("the exact correction needs at least 2 pairs")
    h = schedule.h(L)
    pairs = coupled_exact_tau_batch(network, initial, h, schedule.T, n_E, seed, EXACT_LEVEL,
                                    workers, path_start=path_start)
    values = f(pairs.fine, scaling) - f(pairs.coarse, scaling)
    return LevelStatistics.from_values("E", h, values, pairs.cost)


def _sample(network, scaling, initial, schedule, f, seed, unbiased, ns, starts, workers):
    stats = [estimate_level(network, scaling, initial, l, n, f, seed, schedule, s, workers)
             for l, n, s in zip(schedule.levels, ns, starts)]
    if unbiased:
        stats.append(estimate_exact_correction(network, scaling, initial, schedule.L, ns[-1], f,
                                               seed, schedule, starts[-1], workers))
    return stats


def _combine(stats, eps, kind, schedule, pilot_cost=0) -> MlmcEstimate:
    estimate = math.fsum(s.mean for s in stats)
    variance = math.fsum(s.var / s.n for s in stats)
    cost = sum(s.cost for s in stats)
    shortfall = variance > eps**2
    if shortfall:
        warnings.warn(f"achieved variance {variance:.3e} exceeds eps^2 = {eps**2:.3e}",
                      AllocationShortfall, stacklevel=3)
    return MlmcEstimate(estimate, variance, eps, kind, stats, cost, schedule, pilot_cost,
                        shortfall)


def calibrate(network, scaling, initial, T, f, seed, n_pilot=PILOT_PATHS, workers=1):
    """Return (c_bar, pilot cost) with c_bar = V0 * N**(rho - gamma) from tau paths at h = T."""
    pilot_seed = derive_seed(seed, _PILOT_TAG)
    batch = simulate_tau_batch(network, initial, T, T, n_pilot, pilot_seed, 0, workers)
    stats = LevelStatistics.from_values(0, T, f(batch.finals, scaling), batch.cost)
    if not math.isfinite(stats.var):
        raise DegeneratePilot("pilot variance is not finite")
    cbar = stats.var * scaling.N ** (scaling.rho - scaling.gamma)
    return max(cbar, 1e-300), stats.cost


def _run(network, scaling, initial, T, eps, M, f, seed, allocation, unbiased, theta, n_pilot,
         workers, max_rounds=3) -> MlmcEstimate:
    schedule = build_schedule(T, M, eps, theta)
    kind = "unbiased" if unbiased else "biased"
    n_levels = len(schedule.levels) + (1 if unbiased else 0)
    if unbiased and 1.0 / schedule.h_L > exact_cost_estimate(scaling):
        log.warning("1/h_L = %.3g exceeds the exact-path cost estimate %.3g",
                    1.0 / schedule.h_L, exact_cost_estimate(scaling))
    if allocation == "paper":
        cbar, pilot_cost = calibrate(network, scaling, initial, T, f, seed, n_pilot, workers)
        ns = allocate_paper(schedule, scaling, eps, cbar, unbiased)
        stats = _sample(network, scaling, initial, schedule, f, seed, unbiased, ns,
                        [0] * n_levels, workers)
        return _combine(stats, eps, kind, schedule, pilot_cost)
    if allocation != "adaptive":
        raise ValueError(f"unknown allocation mode {allocation!r}")
    # pilot samples are the first block of each level and are kept
    stats = _sample(network, scaling, initial, schedule, f, seed, unbiased,
                    [n_pilot] * n_levels, [0] * n_levels, workers)
    for _ in range(max_rounds):
        target = allocate_adaptive(stats, eps)
        extra = [max(0, t - s.n) for t, s in zip(target, stats)]
        if not any(extra):
            break
        for i, (l, add) in enumerate(zip(list(schedule.levels) + ["E"], extra)):
            if not add:
                continue
            if l == "E":
                more = estimate_exact_correction(network, scaling, initial, schedule.L, max(add, 2), f,
                                                 seed, schedule, stats[i].n, workers)
            else:
                more = estimate_level(network, scaling, initial, l, max(add, 2), f, seed,
                                      schedule, stats[i].n, workers)
            stats[i] = stats[i].extend(more)
        if math.fsum(s.var / s.n for s in stats) <= eps**2:
            break
    return _combine(stats, eps, kind, schedule)


def run_biased(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
               T: float, eps: float, M: int, f: Observable, seed: int = 0,
               allocation: str = "adaptive", theta: float = 1.0, n_pilot: int = PILOT_PATHS,
               workers: int | None = 1) -> MlmcEstimate:
    """Q_B: sum of level estimates; unbiased for E f(Z_L(T))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return _run(network, scaling, initial, T, eps, M, f, seed, allocation, False, theta,
                n_pilot, workers)


def run_unbiased(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
                 T: float, eps: float, M: int, f: Observable, seed: int = 0,
                 allocation: str = "adaptive", theta: float = 1.0, n_pilot: int = PILOT_PATHS,
                 workers: int | None = 1) -> MlmcEstimate:
    """Q_UB = Q_E + Q_B; unbiased for E f(X(T))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return _run(network, scaling, initial, T, eps, M, f, seed, allocation, True, theta,
                n_pilot, workers)
