import pickle

import numpy as np
import pytest
from scipy.optimize import brentq

from lossy_sched import (AnnealConfig, ChannelInputs, ConstraintSet, PolicyMatrix, StateSpace, buffer_search,
                         cooling_temperature, feasible, gamma_max, gamma_min, optimize, propose, solve_chain)

QUICK = AnnealConfig(n_temps=25, seed=0)


def test_cooling_values():
    cfg = AnnealConfig(T0=100.0, c_sa=1.0)
    assert cooling_temperature(cfg, 0) == 100.0
    assert cooling_temperature(cfg, 4) == 20.0
    temps = [cooling_temperature(cfg, b) for b in range(50)]
    assert np.all(np.diff(temps) < 0)
    with pytest.raises(ValueError):
        cooling_temperature(cfg, -1)


def test_config_validation():
    with pytest.raises(ValueError):
        AnnealConfig(T0=0.0)
    with pytest.raises(ValueError):
        AnnealConfig(n_temps=0)
    with pytest.raises(ValueError):
        ConstraintSet(0.3, 0, 1, epsilon=0.5)
    assert AnnealConfig().proposals_for(StateSpace(2, 1)) == 200


def test_propose_contracts():
    cur = PolicyMatrix.uniform(StateSpace(2, 2), 0.02)
    cfg = AnnealConfig()
    rng = np.random.default_rng(0)
    for T in (1.0, 0.3, 0.01):
        for _ in range(200):
            cand = propose(cur, T, rng, cfg)
            assert all(r.sum() <= 1.0 and r.min() >= 0 for r in cand.alpha_hat)
            changed = [p for p in range(5) if not np.array_equal(cand.alpha_hat[p], cur.alpha_hat[p])]
            assert len(changed) <= 1
    tiny = propose(cur, 1e-12, rng, cfg)
    assert np.max(np.abs(tiny.flat() - cur.flat())) < 1e-11


def test_propose_reproducible():
    cur = PolicyMatrix.uniform(StateSpace(1, 2), 0.02)
    cfg = AnnealConfig()
    a = [propose(cur, 0.5, np.random.default_rng(9), cfg).flat() for _ in range(2)]
    assert np.array_equal(a[0], a[1])


def test_feasible_examples():
    space = StateSpace(0, 1)
    assert feasible(PolicyMatrix.always_schedule(space, 0.0), ConstraintSet(0.3, 0, 1)).ok
    never = feasible(PolicyMatrix.never_schedule(space, 0.02), ConstraintSet(0.3, 0, 1))
    assert not never.ok and never.theta_r == pytest.approx(1.0)


def _policy_with(theta: float, gamma: float) -> PolicyMatrix:
    space = StateSpace(0, 1)

    def metrics(a0, a1):
        sol = solve_chain(PolicyMatrix(space, ([a0], [a1]), 0.02))
        return sol.theta_r, sol.gamma

    def a0_for(a1):
        return brentq(lambda a0: metrics(a0, a1)[0] - theta, 1e-9, 1.0)

    a1 = brentq(lambda a1: metrics(a0_for(a1), a1)[1] - gamma, 0.5, 1.0)
    return PolicyMatrix(space, ([a0_for(a1)], [a1]), 0.02)


def test_infeasible_by_continuity_alone():
    pol = _policy_with(0.29, 0.05)
    sol = solve_chain(pol)
    assert sol.theta_r == pytest.approx(0.29) and sol.gamma == pytest.approx(0.05)
    assert feasible(pol, ConstraintSet(0.3, 0, 1)).ok
    res = feasible(pol, ConstraintSet(0.3, 0, 1, epsilon=0.01))
    assert not res.ok and "continuity" in res.reason


def test_optimize_deterministic(inputs):
    cons = ConstraintSet(0.3, 1, 1, 0.05)
    a, b = optimize(cons, QUICK, inputs), optimize(cons, QUICK, inputs)
    assert np.array_equal(a.best_policy.flat(), b.best_policy.flat())
    assert a.energy_db == b.energy_db
    assert [r.best_energy_db for r in a.trace] == [r.best_energy_db for r in b.trace]


def test_optimize_outcome_is_feasible(inputs):
    cons = ConstraintSet(0.3, 1, 1, 0.02)
    out = optimize(cons, QUICK, inputs)
    assert out.feasible_found
    assert out.theta_r <= 0.3 + 1e-12 and out.gamma <= 0.02 + 1e-12
    best = [r.best_energy_db for r in out.trace]
    assert np.all(np.diff(best) <= 0)
    assert len(out.trace) == QUICK.n_temps


def test_unconstrained_optimum_n1(inputs):
    gamma, out = gamma_max(ConstraintSet(0.3, 0, 1), AnnealConfig(seed=0), inputs)
    assert out.energy_db == pytest.approx(-3.63, abs=0.3)
    assert gamma == pytest.approx(0.09, rel=0.25)


def test_perfect_csi_costs_less(inputs):
    cons = ConstraintSet(0.3, 0, 1)
    lossy = optimize(cons, QUICK, inputs)
    ideal = optimize(cons, QUICK, ChannelInputs(nu_d=0.0))
    assert ideal.energy_db <= lossy.energy_db


def test_all_transmissions_fail():
    inputs = ChannelInputs(nu_d=1.0)
    gamma, out = gamma_max(ConstraintSet(0.3, 0, 1), AnnealConfig(n_temps=3), inputs)
    assert not out.feasible_found and "drop rate" in out.diagnostic
    sol = solve_chain(out.best_policy)
    assert sol.gamma == pytest.approx(sol.pi[-1])


def test_gamma_min_probe(inputs):
    found, outs = gamma_min(ConstraintSet(0.3, 0, 1), AnnealConfig(n_temps=10), inputs,
                            [0.05, 0.01, 1e-3, 1e-4])
    # One always-failing attempt keeps gamma above nu_d * pi_1 > 1e-4.
    assert found == 1e-3
    assert not outs[-1].feasible_found


def test_buffer_search_zero_gain(inputs):
    cons = ConstraintSet(0.3, 0, 1, 0.05)
    res = buffer_search([1, 0], 0.0, cons, AnnealConfig(n_temps=10), inputs)
    assert res.b_star == res.baseline == 0
    assert res.gain_db(0) == 0.0


def test_buffer_search_argument_checks(inputs):
    cons = ConstraintSet(0.3, 0, 1, 0.05)
    with pytest.raises(ValueError):
        buffer_search([], 1.0, cons, QUICK, inputs)
    with pytest.raises(ValueError):
        buffer_search([0, 1], -1.0, cons, QUICK, inputs)
    with pytest.raises(ValueError):
        buffer_search([0, 1], 1.0, ConstraintSet(0.3, 0, 1), QUICK, inputs)


@pytest.mark.slow
def test_buffer_search_one_packet(inputs):
    res = buffer_search([0, 1, 2], 1.9, ConstraintSet(0.3, 0, 1, 0.01), AnnealConfig(seed=0), inputs)
    assert res.b_star == 1


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="the B=2 gain at the optimum is about 3.00 dB, so a 3.0 dB target "
                                        "sits on the annealer's tolerance")
def test_buffer_search_two_packets(inputs):
    res = buffer_search([0, 1, 2], 3.0, ConstraintSet(0.3, 0, 1, 0.01), AnnealConfig(seed=0), inputs)
    assert res.b_star == 2


def test_inputs_pickle_without_kernel(inputs):
    inputs.kernel
    clone = pickle.loads(pickle.dumps(inputs))
    assert "kernel" not in clone.__dict__
    assert clone.nu_d == inputs.nu_d
