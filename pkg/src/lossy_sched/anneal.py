"""Simulated annealing over scheduling policies.

The decision variable is the ``alpha_hat`` table of a
:class:`~lossy_sched.fsmc.PolicyMatrix`. Candidates are scored by the
large-system energy per bit (in dB) and must satisfy the average-drop
target and, optionally, the continuity-violation bound ``gamma <= eps``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .channel import FadingModel, PathLossModel
from .errors import DegenerateDistributionError, ReducibleChainError, SchedulerError
from .fsmc import ChainSolution, PolicyMatrix, StateSpace, recover_thresholds, solve_chain
from .vu import EnergyKernel, EnergyResult

log = logging.getLogger(__name__)

# Slack for comparing drop rates against their targets.
CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class AnnealConfig:
    """Cooling schedule and proposal settings.

    ``proposals_per_temp=None`` means ``50 * (M + 1)``.
    """

    T0: float = 1.0
    c_sa: float = 1.0
    n_temps: int = 100
    proposals_per_temp: int | None = None
    seed: int = 0
    step_scale: float = 0.25

    def __post_init__(self):
        if self.T0 <= 0 or self.c_sa <= 0:
            raise ValueError("T0 and c_sa must be positive")
        if self.n_temps < 1:
            raise ValueError("n_temps must be at least 1")
        if self.proposals_per_temp is not None and self.proposals_per_temp < 1:
            raise ValueError("proposals_per_temp must be at least 1")
        if not 0 < self.step_scale <= 1:
            raise ValueError("step_scale must lie in (0, 1]")

    def proposals_for(self, space: StateSpace) -> int:
        if self.proposals_per_temp is not None:
            return self.proposals_per_temp
        return 50 * space.n_states


@dataclass(frozen=True)
class ConstraintSet:
    theta_tar: float
    B: int
    N: int
    epsilon: float | None = None

    def __post_init__(self):
        if not 0 < self.theta_tar < 1:
            raise ValueError("theta_tar must lie in (0, 1)")
        if self.epsilon is not None and not 0 <= self.epsilon <= self.theta_tar:
            raise ValueError("epsilon must satisfy 0 <= epsilon <= theta_tar")
        StateSpace(self.B, self.N)

    @property
    def space(self) -> StateSpace:
        return StateSpace(self.B, self.N)


@dataclass(frozen=True)
class ChannelInputs:
    """Everything about the radio channel the optimizer needs.

    ``nu_d`` is the per-transmission failure probability caused by
    imperfect channel knowledge.
    """

    nu_d: float = 0.02
    C: float = 0.5
    fading: FadingModel = field(default_factory=FadingModel)
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    grid_size: int = 1024

    def __post_init__(self):
        if not 0 <= self.nu_d <= 1:
            raise ValueError("nu_d must be a probability")
        if self.C <= 0:
            raise ValueError("spectral efficiency C must be positive")

    @cached_property
    def kernel(self) -> EnergyKernel:
        return EnergyKernel(self.fading, self.path_loss, self.C, self.grid_size, self.grid_size)

    def __getstate__(self):
        # The kernel is large and cheap to rebuild; keep pickles small for worker pools.
        state = dict(self.__dict__)
        state.pop("kernel", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    gamma: float
    theta_r: float
    reason: str = ""
    solution: ChainSolution | None = None


@dataclass(frozen=True)
class TraceRow:
    temp_index: int
    temperature: float
    best_energy_db: float
    accept_rate: float


@dataclass(frozen=True)
class OptimizeOutcome:
    best_policy: PolicyMatrix
    best_energy: EnergyResult | None
    gamma: float
    theta_r: float
    trace: list
    feasible_found: bool
    constraints: ConstraintSet
    evaluations: int = 0
    diagnostic: str = ""

    @property
    def energy_db(self) -> float:
        return self.best_energy.eb_n0_db if self.best_energy is not None else math.inf


def cooling_temperature(cfg: AnnealConfig, b: int) -> float:
    """Fast-annealing schedule ``T0 / (c_sa * b + 1)``."""
    if b < 0:
        raise ValueError("step index must be nonnegative")
    return cfg.T0 / (cfg.c_sa * b + 1.0)


def propose(current: PolicyMatrix, temperature: float, rng: np.random.Generator,
            cfg: AnnealConfig) -> PolicyMatrix:
    """Perturb one randomly chosen row, then project it back onto the simplex budget."""
    p = int(rng.integers(current.space.n_states))
    sigma = cfg.step_scale * temperature / cfg.T0
    row = np.clip(current.alpha_hat[p] + sigma * rng.standard_normal(len(current.alpha_hat[p])), 0.0, 1.0)
    total = row.sum()
    if total > 1.0:
        row = row / total
        # Rounding can leave the sum a hair above one.
        row = np.minimum(row, 1.0)
        while row.sum() > 1.0:
            row = np.nextafter(row, 0.0)
    rows = list(current.alpha_hat)
    rows[p] = row
    return current.with_rows(rows)


def feasible(policy: PolicyMatrix, cons: ConstraintSet) -> Feasibility:
    """Check the drop-rate target and the optional continuity bound."""
    if policy.space != cons.space:
        raise ValueError("policy state space does not match the constraint set")
    try:
        sol = solve_chain(policy)
    except (ReducibleChainError, SchedulerError) as exc:
        return Feasibility(False, math.nan, math.nan, f"chain: {exc}")
    if sol.theta_r > cons.theta_tar + CONSTRAINT_TOL:
        return Feasibility(False, sol.gamma, sol.theta_r, "drop rate above target", sol)
    if cons.epsilon is not None and sol.gamma > cons.epsilon + CONSTRAINT_TOL:
        return Feasibility(False, sol.gamma, sol.theta_r, "continuity violation above epsilon", sol)
    return Feasibility(True, sol.gamma, sol.theta_r, "", sol)


def _score(policy: PolicyMatrix, sol: ChainSolution, inputs: ChannelInputs) -> EnergyResult | None:
    table = recover_thresholds(policy, inputs.fading)
    try:
        return inputs.kernel.policy_energy(policy, sol.pi, table)
    except DegenerateDistributionError:
        return None


def initial_policy(cons: ConstraintSet, inputs: ChannelInputs) -> PolicyMatrix:
    """Always-schedule start, falling back to uniform rows when infeasible."""
    start = PolicyMatrix.always_schedule(cons.space, inputs.nu_d)
    if feasible(start, cons).ok:
        return start
    return PolicyMatrix.uniform(cons.space, inputs.nu_d)


def optimize(cons: ConstraintSet, cfg: AnnealConfig, inputs: ChannelInputs,
             start: PolicyMatrix | None = None) -> OptimizeOutcome:
    """Minimize energy per bit subject to the drop constraints.

    Feasible improvements are always taken; feasible deteriorations are
    taken with probability ``exp(-dE / T_b)`` (dE in dB). Infeasible
    candidates use up their proposal slot and are discarded.
    """
    rng = np.random.default_rng(cfg.seed)
    space = cons.space
    current = start if start is not None else initial_policy(cons, inputs)
    check = feasible(current, cons)
    cur_energy = _score(current, check.solution, inputs) if check.ok else None
    feasible_now = check.ok and cur_energy is not None
    best = (current, cur_energy, check) if feasible_now else None
    n_prop = cfg.proposals_for(space)
    trace = []
    evaluations = 0
    last_reason = check.reason
    for b in range(cfg.n_temps):
        T = cooling_temperature(cfg, b)
        accepted = 0
        for _ in range(n_prop):
            cand = propose(current, T, rng, cfg)
            fc = feasible(cand, cons)
            if not fc.ok:
                last_reason = fc.reason
                if not feasible_now:
                    # No feasible point yet: wander freely until one turns up.
                    current = cand
                continue
            e = _score(cand, fc.solution, inputs)
            evaluations += 1
            if e is None:
                continue
            if not feasible_now:
                take = feasible_now = True
            else:
                delta = e.eb_n0_db - cur_energy.eb_n0_db
                take = delta <= 0 or rng.random() < math.exp(-delta / T)
            if take:
                current, cur_energy = cand, e
                accepted += 1
                if best is None or e.eb_n0_db < best[1].eb_n0_db:
                    best = (cand, e, fc)
        rate = accepted / n_prop
        trace.append(TraceRow(b, T, best[1].eb_n0_db if best else math.inf, rate))
        if b == 0:
            log.debug("first temperature acceptance rate %.3f", rate)
    if best is None:
        return OptimizeOutcome(current, None, math.nan, math.nan, trace, False, cons, evaluations,
                               f"no feasible policy found (last rejection: {last_reason})")
    policy, energy, fb = best
    return OptimizeOutcome(policy, energy, fb.gamma, fb.theta_r, trace, True, cons, evaluations)


def gamma_max(cons: ConstraintSet, cfg: AnnealConfig, inputs: ChannelInputs) -> tuple[float, OptimizeOutcome]:
    """Continuity-violation probability of the unconstrained energy optimum."""
    outcome = optimize(replace(cons, epsilon=None), cfg, inputs)
    return outcome.gamma, outcome


def gamma_min(cons: ConstraintSet, cfg: AnnealConfig, inputs: ChannelInputs,
              eps_grid) -> tuple[float | None, list[OptimizeOutcome]]:
    """Smallest epsilon in ``eps_grid`` for which a feasible policy is found.

    Scans ``eps_grid`` from large to small and stops at the first failure.
    """
    found = None
    outcomes = []
    for eps in sorted(eps_grid, reverse=True):
        out = optimize(replace(cons, epsilon=float(eps)), cfg, inputs)
        outcomes.append(out)
        if not out.feasible_found:
            break
        found = float(eps)
    return found, outcomes


@dataclass(frozen=True)
class BufferSearchResult:
    b_star: int | None
    baseline: int
    outcomes: dict
    delta_e_db: float

    def gain_db(self, B: int) -> float:
        return self.outcomes[self.baseline].energy_db - self.outcomes[B].energy_db


def buffer_search(candidates, delta_e_db: float, cons: ConstraintSet, cfg: AnnealConfig,
                  inputs: ChannelInputs) -> BufferSearchResult:
    """Smallest buffer whose constrained optimum beats the smallest buffer by ``delta_e_db``."""
    phi = sorted(set(int(b) for b in candidates))
    if not phi:
        raise ValueError("candidate buffer set is empty")
    if delta_e_db < 0:
        raise ValueError("target energy gain must be nonnegative")
    if cons.epsilon is None:
        raise ValueError("buffer search needs an epsilon constraint")
    outcomes = {B: optimize(replace(cons, B=B), cfg, inputs) for B in phi}
    baseline = phi[0]
    base = outcomes[baseline]
    b_star = None
    if base.feasible_found:
        for B in phi:
            out = outcomes[B]
            if (out.feasible_found and out.gamma <= cons.epsilon + CONSTRAINT_TOL
                    and out.energy_db <= base.energy_db - delta_e_db + 1e-12):
                b_star = B
                break
    return BufferSearchResult(b_star, baseline, outcomes, float(delta_e_db))
