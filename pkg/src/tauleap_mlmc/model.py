"""Reaction networks, mass-action propensities and system-size scaling.

States are held as int64 copy numbers.  The scaled view ``N**-alpha * X`` is
always computed from them on demand.

Since ``N**(gamma + c_k) * lambda_k^N(x^N)`` equals the unscaled mass-action
rate ``lambda_k(X)``, the simulation kernels work directly in copy numbers and
the scaling only enters through observables, cost planning and the mean-field
drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from numba import njit

from .errors import UnsupportedScaling


@dataclass(frozen=True)
class Reaction:
    reactants: tuple[int, ...]
    products: tuple[int, ...]
    rate: float

    def __post_init__(self):
        if len(self.reactants) != len(self.products):
            raise ValueError("reactant and product vectors differ in length")
        if any(int(v) != v or v < 0 for v in self.reactants + self.products):
            raise ValueError("stoichiometric coefficients must be nonnegative integers")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate constant must be positive and finite, got {self.rate}")


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if not self.species:
            raise ValueError("network needs at least one species")
        if not self.reactions:
            raise ValueError("network needs at least one reaction")
        if len(set(self.species)) != len(self.species):
            raise ValueError("duplicate species names")
        d = len(self.species)
        for r in self.reactions:
            if len(r.reactants) != d:
                raise ValueError("stoichiometry length does not match species count")

    @classmethod
    def from_arrays(cls, species, nu_in, nu_out, rates) -> "ReactionNetwork":
        nu_in = np.asarray(nu_in, dtype=np.int64)
        nu_out = np.asarray(nu_out, dtype=np.int64)
        reactions = tuple(
            Reaction(tuple(int(v) for v in a), tuple(int(v) for v in b), float(k))
            for a, b, k in zip(nu_in, nu_out, rates)
        )
        return cls(tuple(species), reactions)

    @property
    def d(self) -> int:
        return len(self.species)

    @property
    def K(self) -> int:
        return len(self.reactions)

    @property
    def nu(self) -> np.ndarray:
        return np.array([r.reactants for r in self.reactions], dtype=np.int64)

    @property
    def nu_out(self) -> np.ndarray:
        return np.array([r.products for r in self.reactions], dtype=np.int64)

    @property
    def zeta(self) -> np.ndarray:
        return self.nu_out - self.nu

    @property
    def kappa(self) -> np.ndarray:
        return np.array([r.rate for r in self.reactions], dtype=np.float64)

    def index(self, name: str) -> int:
        return self.species.index(name)


@dataclass(eq=False)
class SystemState:
    """Unscaled integer copy numbers."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.dtype.kind not in "iu":
            rounded = np.rint(counts)
            if not np.array_equal(rounded, counts):
                raise ValueError("copy numbers must be integers")
            counts = rounded
        self.counts = counts.astype(np.int64)

    def scaled(self, scaling: "ScalingProfile") -> np.ndarray:
        return self.counts * scaling.inv_scale

    @classmethod
    def from_scaled(cls, scaled, scaling: "ScalingProfile") -> "SystemState":
        return cls(np.rint(np.asarray(scaled, dtype=float) * scaling.scale).astype(np.int64))

    def __len__(self):
        return len(self.counts)

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))


@dataclass(frozen=True)
class ScalingProfile:
    N: float
    alpha: tuple[float, ...]
    r: tuple[float, ...]
    rho_k: tuple[float, ...]
    rho: float
    gamma: float
    c: tuple[float, ...]
    zeta_scaled: np.ndarray = field(compare=False, repr=False)

    @property
    def scale(self) -> np.ndarray:
        """Per-species factors N**alpha_i (scaled -> unscaled)."""
        return np.power(float(self.N), np.asarray(self.alpha, dtype=float))

    @property
    def inv_scale(self) -> np.ndarray:
        return np.power(float(self.N), -np.asarray(self.alpha, dtype=float))

    @property
    def rate_factor(self) -> np.ndarray:
        """N**(gamma + c_k), the time-scale multiplier of each scaled intensity."""
        return np.power(float(self.N), self.gamma + np.asarray(self.c, dtype=float))


def _snap_exponent(value: float) -> float:
    frac = Fraction(value).limit_denominator(12)
    if abs(float(frac) - value) < 1e-9:
        return float(frac)
    return value


def derive_scaling(network: ReactionNetwork, N: float, alpha: Sequence[float]) -> ScalingProfile:
    alpha = tuple(float(a) for a in alpha)
    if len(alpha) != network.d:
        raise ValueError(f"expected {network.d} alpha exponents, got {len(alpha)}")
    if any(a < 0 for a in alpha):
        raise ValueError("alpha exponents must be nonnegative")
    if not N > 1:
        raise ValueError("system size N must exceed 1")
    N = float(N)
    logN = math.log(N)
    nu = network.nu
    zeta = network.zeta
    a = np.asarray(alpha)

    r = tuple(
        _snap_exponent(math.log(kappa) / logN + float(a @ nu[k]))
        for k, kappa in enumerate(network.kappa)
    )
    rho_k = []
    for k in range(network.K):
        moved = a[zeta[k] != 0]
        # a reaction with zero net change never moves the state
        rho_k.append(float(moved.min()) if moved.size else math.inf)
    finite = [x for x in rho_k if math.isfinite(x)]
    if not finite:
        raise ValueError("every reaction has a zero reaction vector")
    rho = min(finite)
    gamma = max(rk - pk for rk, pk in zip(r, rho_k) if math.isfinite(pk))
    gamma = _snap_exponent(gamma)
    if gamma > 1e-12:
        raise UnsupportedScaling(
            f"time-scale exponent gamma = {gamma:g} > 0; only gamma <= 0 is supported"
        )
    c = tuple(_snap_exponent(rk - gamma) for rk in r)
    zeta_scaled = zeta * np.power(N, -a)[None, :]
    return ScalingProfile(N, alpha, r, tuple(rho_k), rho, gamma, c, zeta_scaled)


@njit(cache=True)
def mass_action_into(nu, kappa, x, out):
    """Mass-action rates of integer state ``x``, written into ``out``.

    All rates are clamped to zero as soon as any count is negative.
    """
    K, d = nu.shape
    for i in range(d):
        if x[i] < 0:
            for k in range(K):
                out[k] = 0.0
            return
    for k in range(K):
        a = kappa[k]
        for i in range(d):
            xi = x[i]
            for j in range(nu[k, i]):
                a *= xi - j
        out[k] = a


@njit(cache=True)
def mass_action_real(nu, kappa, x, out):
    """Falling-factorial rates for real-valued copy numbers, clamped at zero."""
    K, d = nu.shape
    for i in range(d):
        if x[i] < 0.0:
            for k in range(K):
                out[k] = 0.0
            return
    for k in range(K):
        a = kappa[k]
        for i in range(d):
            for j in range(nu[k, i]):
                f = x[i] - j
                if f < 0.0:
                    a = 0.0
                a *= f
        out[k] = a if a > 0.0 else 0.0


def propensity(network: ReactionNetwork, state) -> np.ndarray:
    x = state.counts if isinstance(state, SystemState) else np.asarray(state, dtype=np.int64)
    if len(x) != network.d:
        raise ValueError(f"state has {len(x)} entries, network has {network.d} species")
    out = np.empty(network.K)
    mass_action_into(network.nu, network.kappa, x.astype(np.int64), out)
    return out


def scaled_propensity(network: ReactionNetwork, scaling: ScalingProfile, scaled_state) -> np.ndarray:
    """lambda_k^N at a (real) scaled state."""
    x = np.asarray(scaled_state, dtype=float)
    out = np.empty(network.K)
    mass_action_real(network.nu, network.kappa, x * scaling.scale, out)
    return out / np.power(scaling.N, np.asarray(scaling.r))


def exact_cost_estimate(scaling: ScalingProfile) -> float:
    """N_bar = N**gamma * sum_k N**c_k, the order of jumps per exact path."""
    N = scaling.N
    return N ** scaling.gamma * sum(N ** ck for ck in scaling.c)


def check_conservation(network: ReactionNetwork, w) -> bool:
    w = np.asarray(w, dtype=float)
    if w.shape != (network.d,) or np.any(w <= 0):
        raise ValueError("w must hold one positive weight per species")
    return bool(np.all(network.zeta @ w <= 0))


@njit(cache=True)
def drift_kernel(nu, kappa, scale, zeta_scaled, x, lam, out):
    """F^N(x): unscaled rates at N**alpha * x, summed against the scaled reaction vectors."""
    K, d = zeta_scaled.shape
    X = np.empty(d)
    for i in range(d):
        X[i] = x[i] * scale[i]
    mass_action_real(nu, kappa, X, lam)
    for i in range(d):
        out[i] = 0.0
    for k in range(K):
        if lam[k] != 0.0:
            for i in range(d):
                out[i] += lam[k] * zeta_scaled[k, i]


def drift(network: ReactionNetwork, scaling: ScalingProfile, scaled_state) -> np.ndarray:
    """Mean-field drift F^N(x) = sum_k N**(gamma+c_k) lambda_k^N(x) zeta_k^N."""
    out = np.empty(network.d)
    drift_kernel(network.nu, network.kappa, scaling.scale, scaling.zeta_scaled,
                 np.asarray(scaled_state, dtype=float), np.empty(network.K), out)
    return out


@dataclass
class Model:
    """A network together with its initial condition and scaling inputs."""

    network: ReactionNetwork
    initial: SystemState
    N: float = 2.0
    alpha: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = (0.0,) * self.network.d
        self.alpha = tuple(float(a) for a in self.alpha)

    @property
    def scaling(self) -> ScalingProfile:
        return derive_scaling(self.network, self.N, self.alpha)


def dimerization(N: float, mass_fraction: float = 0.2) -> Model:
    """2A <-> B with forward rate 1/N, backward rate 1, X_A(0) = X_B(0) = mass_fraction*N."""
    x0 = mass_fraction * N
    if abs(x0 - round(x0)) > 1e-9 * max(1.0, x0):
        raise ValueError("mass_fraction * N must be an integer")
    net = ReactionNetwork.from_arrays(
        ("A", "B"), [[2, 0], [0, 1]], [[0, 1], [2, 0]], [1.0 / N, 1.0]
    )
    return Model(net, SystemState([round(x0), round(x0)]), float(N), (1.0, 1.0))


def decay(x0: int, kappa: float = 1.0, N: float | None = None) -> Model:
    """Linear decay A -> 0, scaled by N (default N = x0) with alpha = 1."""
    net = ReactionNetwork.from_arrays(("A",), [[1]], [[0]], [kappa])
    return Model(net, SystemState([x0]), float(N if N is not None else x0), (1.0,))
