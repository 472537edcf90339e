"""Energy-efficient, loss-tolerant multiuser scheduling.

A per-user finite-state Markov chain describes buffering and packet drops,
simulated annealing finds the least-energy threshold policy under drop
constraints, and a Monte Carlo simulator checks the analytic model.
"""

from .anneal import (AnnealConfig, BufferSearchResult, ChannelInputs, ConstraintSet, OptimizeOutcome,
                     buffer_search, cooling_temperature, feasible, gamma_max, gamma_min, optimize, propose)
from .channel import (DistributionGrid, FadingModel, PathLossModel, fading_cdf, fading_inverse_cdf,
                      kolmogorov_distance, path_loss_distribution, product_distribution)
from .errors import (ConfigError, DegenerateDistributionError, DivergentEnergyError, DomainError,
                     InfeasiblePolicyError, NumericalError, ReducibleChainError, SchedulerError)
from .fsmc import (ChainSolution, PolicyMatrix, StateSpace, ThresholdTable, TransitionMatrix, assemble,
                   average_drop_rate, decide, recover_thresholds, solve_chain, steady_state,
                   violation_probability)
from .simulate import SimConfig, SimReport, UserState, occupancy_check, run, sic_energy
from .vu import EnergyKernel, EnergyResult, VuFading, energy_per_bit, vu_distribution, vu_fading_pdf

__version__ = "0.1.0"
