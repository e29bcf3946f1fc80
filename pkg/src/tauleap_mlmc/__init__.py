"""Exact, tau-leap and coupled simulation of scaled reaction networks with multilevel Monte Carlo."""

__version__ = "0.1.0"

from .errors import (AllocationShortfall, DegeneratePilot, DuplicateSpecies, EventBudgetExceeded,
                     InvalidGrid, InvalidMean, InvalidRate, NonPositiveRate, ParseError,
                     ScheduleOverflow, SingularDesign, TauLeapError, UnknownSpecies,
                     UnsupportedScaling)
from .model import (Model, Reaction, ReactionNetwork, ScalingProfile, SystemState, decay,
                    derive_scaling, dimerization, drift, propensity, scaled_propensity)
from .streams import PathKey, Stream, StreamKey, exponential_sample, poisson_sample, stream_for
from .exact import simulate_exact, simulate_exact_batch
from .tau import simulate_tau, simulate_tau_batch
from .coupling import (coupled_exact_tau, coupled_exact_tau_batch, coupled_tau_batch,
                       coupled_tau_pair)
from .mlmc import (LevelSchedule, LevelStatistics, MlmcEstimate, Observable, build_schedule,
                   run_biased, run_unbiased)
from .study import (PowerLawFit, SweepTable, complexity_sweep, deviation_moment, fit_power_law,
                    mean_field_euler, variance_sweep)
from .parser import format_model, parse_model

__all__ = [name for name in dir() if not name.startswith("_")]
