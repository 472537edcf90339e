"""Command-line driver: ``lossy-sched <config> [--mode M] [--seed S] [--out PATH] [--verbose]``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .anneal import AnnealConfig, ChannelInputs, ConstraintSet, buffer_search, optimize
from .channel import FadingModel, PathLossModel
from .config import MODES, ExperimentSpec, ParseError, check_mode, parse_config
from .errors import NumericalError
from .fsmc import PolicyMatrix, recover_thresholds, solve_chain
from .simulate import SimConfig, occupancy_check, run


EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def channel_inputs(spec: ExperimentSpec) -> ChannelInputs:
    s = spec.scheduler
    fading = FadingModel(quantile_lo=s.fading_quantile_lo, quantile_hi=s.fading_quantile_hi)
    path_loss = PathLossModel(delta=s.delta, exponent=s.path_loss_exponent)
    return ChannelInputs(nu_d=s.nu_d, C=s.C, fading=fading, path_loss=path_loss,
                         grid_size=spec.anneal.grid_size)


def anneal_config(spec: ExperimentSpec, seed: int) -> AnnealConfig:
    a = spec.anneal
    return AnnealConfig(T0=a.T0, c_sa=a.c_sa, n_temps=a.n_temps, proposals_per_temp=a.proposals_per_temp,
                        seed=seed, step_scale=a.step_scale)


def _sim_config(spec: ExperimentSpec, policy: PolicyMatrix, seed: int) -> SimConfig:
    inputs = channel_inputs(spec)
    return SimConfig(table=recover_thresholds(policy, inputs.fading), nu_d=policy.nu_d, K=spec.sim.K,
                     T=spec.sim.T, seed=seed, Z0=spec.sim.Z0, C=inputs.C, fading=inputs.fading,
                     path_loss=inputs.path_loss, warmup=spec.sim.warmup, trace=spec.sim.trace)


# Worker entry points; module level so a process pool can pickle them.

def _optimize_task(args):
    spec, B, N, eps, seed = args
    cons = ConstraintSet(spec.scheduler.theta_tar, B, N, eps)
    return optimize(cons, anneal_config(spec, seed), channel_inputs(spec))


def _buffer_task(args):
    spec, N, seed = args
    s = spec.scheduler
    cons = ConstraintSet(s.theta_tar, min(s.B), N, s.epsilon)
    return buffer_search(s.B, s.delta_e_db, cons, anneal_config(spec, seed), channel_inputs(spec))


def _simulate_task(args):
    spec, policy, seed = args
    return run(_sim_config(spec, policy, seed))


def _validate_task(args):
    spec, B, N, seed = args
    out = _optimize_task((spec, B, N, spec.scheduler.epsilon, seed))
    if not out.feasible_found:
        return out, None
    return out, run(_sim_config(spec, out.best_policy, seed))


def _fan_out(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _p(v: float) -> str:
    return "nan" if v is None or not np.isfinite(v) else f"{v:.6g}"


def _db(v: float) -> str:
    return "inf" if v is None or not np.isfinite(v) else f"{v:.2f}"


def _eps(v) -> str:
    return "" if v is None else f"{v:g}"


def _write_traces(spec: ExperimentSpec, tag: str, outcome) -> None:
    if spec.trace_dir is None:
        return
    d = Path(spec.trace_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / f"trace_{tag}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["temp_index", "T_b", "best_energy_db", "accept_rate"])
        for r in outcome.trace:
            w.writerow([r.temp_index, f"{r.temperature:.6g}", f"{r.best_energy_db:.6f}", f"{r.accept_rate:.4f}"])
    if outcome.feasible_found:
        outcome.best_policy.dump(d / f"policy_{tag}.txt")


def _outcome_cols(out) -> list[str]:
    return [str(int(out.feasible_found)), _db(out.energy_db), _p(out.gamma), _p(out.theta_r)]


def run_experiment(spec: ExperimentSpec, out_path=None) -> tuple[int, list[list[str]]]:
    """Execute ``spec`` for every seed and write the CSV; returns ``(exit_code, rows)``."""
    s = spec.scheduler
    seeds = spec.seeds
    status = EXIT_OK
    header: list[str]
    rows: list[list[str]] = []

    if spec.mode in ("optimize", "gamma-max", "sweep-epsilon"):
        if spec.mode == "optimize":
            eps_points = (s.epsilon,)
        elif spec.mode == "gamma-max":
            eps_points = (None,)
        else:
            eps_points = s.epsilons
        tasks = [(spec, B, N, e, seed) for B in s.B for N in s.N for e in eps_points for seed in seeds]
        outs = _fan_out(_optimize_task, tasks, spec.workers)
        if spec.mode == "gamma-max":
            header = ["N", "B", "seed", "feasible", "energy_db", "gamma_m", "theta_r"]
        else:
            header = ["B", "N", "epsilon", "seed", "feasible", "energy_db", "gamma", "theta_r"]
        for (_, B, N, e, seed), out in zip(tasks, outs):
            tag = f"B{B}_N{N}_eps{_eps(e) or 'none'}_seed{seed}"
            _write_traces(spec, tag, out)
            if spec.mode == "gamma-max":
                rows.append([str(N), str(B), str(seed)] + _outcome_cols(out))
            else:
                rows.append([str(B), str(N), _eps(e), str(seed)] + _outcome_cols(out))
            print(f"{spec.mode} {tag}: feasible={out.feasible_found} energy={_db(out.energy_db)} dB "
                  f"gamma={_p(out.gamma)} theta_r={_p(out.theta_r)}")
            if not out.feasible_found:
                status = EXIT_INFEASIBLE

    elif spec.mode == "buffer-search":
        tasks = [(spec, N, seed) for N in s.N for seed in seeds]
        results = _fan_out(_buffer_task, tasks, spec.workers)
        header = ["B", "N", "epsilon", "seed", "feasible", "energy_db", "gamma", "theta_r", "gain_db", "b_star"]
        for (_, N, seed), res in zip(tasks, results):
            for B, out in sorted(res.outcomes.items()):
                _write_traces(spec, f"B{B}_N{N}_eps{_eps(s.epsilon)}_seed{seed}", out)
                gain = res.gain_db(B) if out.feasible_found and res.outcomes[res.baseline].feasible_found else np.nan
                rows.append([str(B), str(N), _eps(s.epsilon), str(seed)] + _outcome_cols(out)
                            + [_db(gain), "" if res.b_star is None else str(res.b_star)])
            print(f"buffer-search N={N} seed={seed}: B*={res.b_star} "
                  + " ".join(f"B={B}:{_db(o.energy_db)}dB" for B, o in sorted(res.outcomes.items())))
            if res.b_star is None:
                status = EXIT_INFEASIBLE

    elif spec.mode == "simulate":
        loaded = PolicyMatrix.load(spec.sim.policy)
        policy = PolicyMatrix(loaded.space, loaded.alpha_hat, s.nu_d)
        pi = solve_chain(policy).pi
        reports = _fan_out(_simulate_task, [(spec, policy, seed) for seed in seeds], spec.workers)
        header = ["B", "N", "seed", "K", "T", "theta_hat", "theta_halfwidth", "gamma_hat", "gamma_halfwidth",
                  "energy_per_scheduled_bit_db", "energy_per_delivered_bit_db", "occupancy_max_dev"]
        for seed, rep in zip(seeds, reports):
            rows.append([str(policy.space.B), str(policy.space.N), str(seed)] + rep.csv_row()
                        + [_p(occupancy_check(rep, pi))])
            print(f"simulate seed={seed}: theta_hat={_p(rep.theta_hat)}±{_p(rep.theta_halfwidth)} "
                  f"gamma_hat={_p(rep.gamma_hat)}±{_p(rep.gamma_halfwidth)} "
                  f"E_sched={_db(rep.energy_per_scheduled_bit_db)} dB")
            _write_slot_trace(spec, f"seed{seed}", rep)

    elif spec.mode == "validate":
        tasks = [(spec, B, N, seed) for B in s.B for N in s.N for seed in seeds]
        results = _fan_out(_validate_task, tasks, spec.workers)
        header = ["B", "N", "seed", "feasible", "energy_db", "theta_r", "theta_hat", "theta_halfwidth",
                  "gamma", "gamma_hat", "gamma_halfwidth", "energy_per_scheduled_bit_db",
                  "energy_per_delivered_bit_db", "energy_gap_db", "occupancy_max_dev"]
        for (_, B, N, seed), (out, rep) in zip(tasks, results):
            tag = f"B{B}_N{N}_eps{_eps(s.epsilon) or 'none'}_seed{seed}"
            _write_traces(spec, tag, out)
            if rep is None:
                rows.append([str(B), str(N), str(seed), "0"] + ["nan"] * 11)
                status = EXIT_INFEASIBLE
                print(f"validate {tag}: no feasible policy")
                continue
            pi = solve_chain(out.best_policy).pi
            gap = rep.energy_per_scheduled_bit_db - out.energy_db
            rows.append([str(B), str(N), str(seed), "1", _db(out.energy_db), _p(out.theta_r),
                         _p(rep.theta_hat), _p(rep.theta_halfwidth), _p(out.gamma), _p(rep.gamma_hat),
                         _p(rep.gamma_halfwidth), _db(rep.energy_per_scheduled_bit_db),
                         _db(rep.energy_per_delivered_bit_db), _db(gap), _p(occupancy_check(rep, pi))])
            print(f"validate {tag}: theta {_p(out.theta_r)} vs {_p(rep.theta_hat)}, "
                  f"gamma {_p(out.gamma)} vs {_p(rep.gamma_hat)}, energy gap {_db(gap)} dB")
            _write_slot_trace(spec, tag, rep)
    else:  # pragma: no cover - check_mode guards this
        raise ParseError("experiment.mode", f"unknown mode {spec.mode!r}")

    path = Path(out_path or spec.output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(spec, header, rows))
    return status, rows


def _write_slot_trace(spec: ExperimentSpec, tag: str, rep) -> None:
    if rep.trace is None or spec.trace_dir is None:
        return
    d = Path(spec.trace_dir)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / f"slots_{tag}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "scheduled", "energy"])
        for slot, n, e in rep.trace:
            w.writerow([slot, n, f"{e:.9g}"])


def render_csv(spec: ExperimentSpec, header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    for key, value in spec.resolved():
        buf.write(f"# {key} = {value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lossy-sched", description=__doc__)
    ap.add_argument("config", help="experiment config (INI)")
    ap.add_argument("--mode", choices=MODES, help="override experiment.mode")
    ap.add_argument("--seed", type=int, help="run a single seed instead of experiment.seeds")
    ap.add_argument("--out", help="override output.path")
    ap.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_config(args.config)
        if args.mode:
            spec = replace(spec, mode=args.mode)
        if args.seed is not None:
            spec = replace(spec, seeds=(args.seed,))
        if args.out:
            spec = replace(spec, output_path=args.out)
        if args.verbose:
            spec = replace(spec, sim=replace(spec.sim, trace=True))
        check_mode(spec)
        status, _ = run_experiment(spec)
    except ParseError as exc:
        print(f"lossy-sched: config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"lossy-sched: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return status


if __name__ == "__main__":
    sys.exit(main())
