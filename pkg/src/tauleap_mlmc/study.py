"""Experiment harness: variance sweeps, power-law fits, mean-field paths, complexity runs."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from .coupling import coupled_exact_tau_batch, coupled_tau_batch
from .errors import SingularDesign
from .exact import simulate_exact_batch
from .mlmc import LevelStatistics, Observable, build_schedule, run_biased, run_unbiased
from .model import Model, ReactionNetwork, ScalingProfile, SystemState, drift_kernel
from .streams import derive_seed
from .tau import grid_steps, simulate_tau_batch

ModelTemplate = Callable[[float], Model]

SWEEP_COLUMNS = ("N", "h", "kind", "pairs", "variance", "var_stderr", "cost")
REFERENCE_STEPS = 10**5


@dataclass
class SweepRow:
    N: float
    h: float
    kind: str
    pairs: int
    variance: float
    var_stderr: float
    cost: int


class SweepTable(list):
    """Rows of a variance sweep; serialises to the sweep CSV schema."""

    def to_csv(self, header: str = "") -> str:
        buf = io.StringIO()
        for line in header.splitlines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self:
            w.writerow([repr(float(r.N)), repr(float(r.h)), r.kind, r.pairs, repr(float(r.variance)),
                        repr(float(r.var_stderr)), r.cost])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepTable":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        table = cls()
        for rec in csv.DictReader(lines):
            table.append(SweepRow(float(rec["N"]), float(rec["h"]), rec["kind"], int(rec["pairs"]),
                                  float(rec["variance"]), float(rec["var_stderr"]),
                                  int(rec["cost"])))
        return table


def variance_stderr(values: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its standard error from the fourth central moment."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    mean = math.fsum(values) / n
    dev = values - mean
    s2 = math.fsum(dev**2) / (n - 1)
    m4 = math.fsum(dev**4) / n
    se2 = (m4 - (n - 3) / (n - 1) * s2**2) / n
    return s2, math.sqrt(max(se2, 0.0))


def first_coordinate(network: ReactionNetwork) -> Observable:
    return Observable.coordinate(network, network.species[0])


def variance_sweep(template: ModelTemplate, N_values: Sequence[float], h_values: Sequence[float],
                   kind: str, pairs: int, f: Observable | None = None, seed: int = 0,
                   t_end: float = 0.3, M: int = 3, workers: int | None = 1) -> SweepTable:
    """Sample variance of f(fine) - f(coarse) over an (N, h) grid.

    For ``kind="tau-tau"`` h is the fine step and the coarse step is M*h;
    for ``"exact-tau"`` the pair is (X, Z_h).  Cell i draws from stream level i.
    """
    if kind not in ("tau-tau", "exact-tau"):
        raise ValueError(f"unknown pair kind {kind!r}")
    table = SweepTable()
    cell = 0
    for N in N_values:
        model = template(N)
        scaling = model.scaling
        obs = f if f is not None else first_coordinate(model.network)
        for h in h_values:
            if kind == "tau-tau":
                batch = coupled_tau_batch(model.network, model.initial, h, M, t_end, pairs, seed,
                                          cell, workers)
            else:
                batch = coupled_exact_tau_batch(model.network, model.initial, h, t_end, pairs,
                                                seed, cell, workers)
            diff = obs(batch.fine, scaling) - obs(batch.coarse, scaling)
            var, se = variance_stderr(diff)
            table.append(SweepRow(float(N), float(h), kind, pairs, var, se, batch.cost))
            cell += 1
    return table


@dataclass
class PowerLawFit:
    C: float
    a: float
    b: float
    residual_rms: float

    def predict(self, N, h):
        return self.C * np.power(N, self.a) * np.power(h, self.b)

    def as_dict(self) -> dict:
        return asdict(self)


def fit_power_law(table: Iterable, mode: str = "full") -> PowerLawFit:
    """Least squares of log V on (1, log N, log h).

    ``mode="h"`` fits C * h**b only (a = 0), ``mode="N"`` fits C * N**a only.
    """
    rows = [r for r in table]
    N = np.array([r.N for r in rows], dtype=float)
    h = np.array([r.h for r in rows], dtype=float)
    V = np.array([r.variance for r in rows], dtype=float)
    if np.any(V <= 0):
        raise SingularDesign("power-law fits need strictly positive variances")
    cols = {"full": [np.log(N), np.log(h)], "h": [np.log(h)], "N": [np.log(N)]}
    if mode not in cols:
        raise ValueError(f"unknown fit mode {mode!r}")
    A = np.column_stack([np.ones(len(rows))] + cols[mode])
    if len(rows) < A.shape[1] + (1 if mode == "full" else 0):
        raise SingularDesign(f"{len(rows)} rows are too few for a {mode} fit")
    if np.linalg.matrix_rank(A, tol=1e-10 * max(1.0, np.abs(A).max())) < A.shape[1]:
        which = {"full": "N and h", "h": "h", "N": "N"}[mode]
        raise SingularDesign(f"design is collinear in log space; cannot fit the {which} exponent")
    y = np.log(V)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    a = coef[1] if mode in ("full", "N") else 0.0
    b = coef[2] if mode == "full" else (coef[1] if mode == "h" else 0.0)
    return PowerLawFit(float(np.exp(coef[0])), float(a), float(b), rms)


@njit(cache=True)
def _euler_kernel(nu, kappa, scale, zeta_scaled, x0, h, n_steps, path, drifts):
    K, d = zeta_scaled.shape
    lam = np.empty(K)
    F = np.empty(d)
    for i in range(d):
        path[0, i] = x0[i]
    for j in range(n_steps):
        drift_kernel(nu, kappa, scale, zeta_scaled, path[j], lam, F)
        for i in range(d):
            drifts[j, i] = F[i]
            path[j + 1, i] = path[j, i] + h * F[i]


@dataclass
class MeanFieldPath:
    times: np.ndarray
    states: np.ndarray
    drifts: np.ndarray
    h: float

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def mean_field_euler(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
                     h: float, t_end: float) -> MeanFieldPath:
    """Euler iteration z_{j+1} = z_j + h F^N(z_j) of the scaled mean-field ODE."""
    n_steps = grid_steps(t_end, h)
    path = np.empty((n_steps + 1, network.d))
    drifts = np.empty((n_steps, network.d))
    _euler_kernel(network.nu, network.kappa, scaling.scale, scaling.zeta_scaled,
                  initial.scaled(scaling), float(h), n_steps, path, drifts)
    return MeanFieldPath(np.arange(n_steps + 1) * h, path, drifts, float(h))


@dataclass
class DeviationEstimate:
    mean: float
    stderr: float
    n: int
    cost: int


def deviation_moment(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
                     t_end: float, n: int, seed: int = 0, ref_steps: int = REFERENCE_STEPS,
                     workers: int | None = 1) -> DeviationEstimate:
    """Monte Carlo E[sup_{s<=T} |X^N(s) - x^N(s)|^2] against a fine Euler reference."""
    if n < 100:
        raise ValueError("deviation_moment needs at least 100 paths")
    ref_h = t_end / ref_steps
    ref = mean_field_euler(network, scaling, initial, ref_h, t_end).states
    batch = simulate_exact_batch(network, initial, t_end, n, seed, 0, workers,
                                 reference=(ref, ref_h), inv_scale=scaling.inv_scale)
    sups = batch.sup_sq_dev
    mean = math.fsum(sups) / n
    sd = math.sqrt(math.fsum((sups - mean) ** 2) / (n - 1))
    return DeviationEstimate(mean, sd / math.sqrt(n), n, batch.cost)


@dataclass
class ComplexityRow:
    eps: float
    variance: float
    cost: int
    estimate: float
    levels: int


def complexity_sweep(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
                     t_end: float, eps_values: Sequence[float], kind: str = "biased",
                     f: Observable | None = None, seed: int = 0, M: int = 3,
                     allocation: str = "adaptive", workers: int | None = 1) -> list[ComplexityRow]:
    eps_values = list(eps_values)
    if len(eps_values) < 3 or any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("need at least 3 strictly descending eps values")
    f = f if f is not None else first_coordinate(network)
    run = run_biased if kind == "biased" else run_unbiased
    rows = []
    for eps in eps_values:
        est = run(network, scaling, initial, t_end, eps, M, f, seed, allocation, workers=workers)
        rows.append(ComplexityRow(eps, est.variance, est.total_cost + est.pilot_cost,
                                  est.estimate, est.schedule.L))
    return rows


def cost_slope(rows: Sequence[ComplexityRow]) -> float:
    """Least-squares slope of log(cost) against log(eps)."""
    x = np.log([r.eps for r in rows])
    y = np.log([r.cost for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def single_level_cost(network: ReactionNetwork, scaling: ScalingProfile, initial: SystemState,
                      t_end: float, eps: float, M: int = 3, f: Observable | None = None,
                      seed: int = 0, n_pilot: int = 100, theta: float = 1.0,
                      workers: int | None = 1) -> tuple[int, LevelStatistics]:
    """Plain tau-leap Monte Carlo at h_L with n = ceil(V_pilot / eps**2) paths; returns (cost, stats)."""
    f = f if f is not None else first_coordinate(network)
    h = build_schedule(t_end, M, eps, theta).h_L
    pilot = simulate_tau_batch(network, initial, h, t_end, n_pilot, derive_seed(seed, 2), 0,
                               workers)
    v = LevelStatistics.from_values(0, h, f(pilot.finals, scaling), pilot.cost).var
    n = max(2, math.ceil(v / eps**2))
    batch = simulate_tau_batch(network, initial, h, t_end, n, seed, 0, workers)
    return batch.cost, LevelStatistics.from_values(0, h, f(batch.finals, scaling), batch.cost)
