"""Experiment configuration files.

Configs are INI files read with :mod:`configparser`::

    [experiment]
    mode = gamma-max          ; optimize | gamma-max | sweep-epsilon |
                              ; buffer-search | simulate | validate
    seeds = 0, 1, 2, 3, 4
    workers = 1

    [scheduler]
    B = 0                     ; list allowed; the candidate set in buffer-search
    N = 1, 2, 3               ; list allowed
    theta_tar = 0.3
    nu_d = 0.02
    epsilon = 0.01            ; optional continuity bound
    epsilons = 0.005, 0.01    ; sweep-epsilon grid
    delta_e_db = 1.9          ; buffer-search target gain
    C = 0.5
    delta = 0.01
    path_loss_exponent = 2
    fading_quantile_lo = 1e-10
    fading_quantile_hi = 0.9999999999

    [anneal]
    T0 = 1.0
    c_sa = 1.0
    n_temps = 100
    proposals_per_temp =      ; empty means 50 * (M + 1)
    step_scale = 0.25
    grid_size = 1024

    [sim]
    K = 1000
    T = 10000
    warmup = 100
    Z0 = 1.0
    policy =                  ; policy fixture, required by simulate;
                              ; relative to the config file
    trace = false

    [output]
    path = results.csv        ; relative to the working directory
    trace_dir =               ; optional: SA traces and best-policy fixtures
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

MODES = ("optimize", "gamma-max", "sweep-epsilon", "buffer-search", "simulate", "validate")


class ParseError(ConfigError):
    """A config file is missing a key or holds an invalid value."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class SchedulerConfig:
    B: tuple
    N: tuple
    theta_tar: float
    nu_d: float
    epsilon: float | None = None
    epsilons: tuple = ()
    delta_e_db: float | None = None
    C: float = 0.5
    delta: float = 0.01
    path_loss_exponent: float = 2.0
    fading_quantile_lo: float = 1e-10
    fading_quantile_hi: float = 1.0 - 1e-10


@dataclass(frozen=True)
class AnnealSettings:
    T0: float = 1.0
    c_sa: float = 1.0
    n_temps: int = 100
    proposals_per_temp: int | None = None
    step_scale: float = 0.25
    grid_size: int = 1024


@dataclass(frozen=True)
class SimSettings:
    K: int = 1000
    T: int = 10_000
    warmup: int = 100
    Z0: float = 1.0
    policy: str | None = None
    trace: bool = False


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    scheduler: SchedulerConfig
    anneal: AnnealSettings = field(default_factory=AnnealSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    output_path: str = "results.csv"
    trace_dir: str | None = None
    seeds: tuple = (0,)
    workers: int = 1

    def resolved(self) -> list[tuple[str, str]]:
        """Flat ``(key, value)`` listing of every setting, defaults included."""
        out = [("experiment.mode", self.mode),
               ("experiment.seeds", ", ".join(str(s) for s in self.seeds)),
               ("experiment.workers", str(self.workers))]
        for section, obj in (("scheduler", self.scheduler), ("anneal", self.anneal), ("sim", self.sim)):
            for f in fields(obj):
                out.append((f"{section}.{f.name}", _fmt(getattr(obj, f.name))))
        out.append(("output.path", self.output_path))
        out.append(("output.trace_dir", _fmt(self.trace_dir)))
        return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_ALLOWED = {
    "experiment": {"mode", "seeds", "workers"},
    "scheduler": {f.name.lower() for f in fields(SchedulerConfig)},
    "anneal": {f.name.lower() for f in fields(AnnealSettings)},
    "sim": {f.name.lower() for f in fields(SimSettings)},
    "output": {"path", "trace_dir"},
}


class _Reader:
    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp

    def raw(self, section: str, key: str):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            return None
        value = self.cp.get(section, key).strip()
        return value if value != "" else None

    def get(self, section, key, conv, default=None, required=False):
        value = self.raw(section, key)
        name = f"{section}.{key}"
        if value is None:
            if required:
                raise ParseError(name, "required key is missing")
            return default
        try:
            return conv(value)
        except (TypeError, ValueError) as exc:
            raise ParseError(name, f"cannot parse {value!r} ({exc})") from None

    def get_list(self, section, key, conv, default=(), required=False):
        return self.get(section, key, lambda v: tuple(conv(x.strip()) for x in v.split(",") if x.strip()),
                        default, required)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _prob(name: str, v, lo_open=False, hi_open=False):
    if v is None:
        return
    if not (0 < v if lo_open else 0 <= v) or not (v < 1 if hi_open else v <= 1):
        raise ParseError(name, f"{v} is not a valid probability")


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError("<file>", f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _ALLOWED:
            raise ParseError(section, "unknown section")
        for key in cp.options(section):
            if key not in _ALLOWED[section]:
                raise ParseError(f"{section}.{key}", "unknown key")
    r = _Reader(cp)

    mode = r.get("experiment", "mode", str, required=True)
    if mode not in MODES:
        raise ParseError("experiment.mode", f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    seeds = r.get_list("experiment", "seeds", int, (0,))
    if not seeds:
        raise ParseError("experiment.seeds", "at least one seed is required")
    workers = r.get("experiment", "workers", int, 1)
    if workers < 1:
        raise ParseError("experiment.workers", "must be at least 1")

    B = r.get_list("scheduler", "b", int, required=True)
    N = r.get_list("scheduler", "n", int, required=True)
    if not B or any(b < 0 for b in B):
        raise ParseError("scheduler.B", "buffer sizes must be nonnegative integers")
    if not N or any(n < 1 for n in N):
        raise ParseError("scheduler.N", "continuity parameters must be positive integers")
    theta_tar = r.get("scheduler", "theta_tar", float, required=True)
    _prob("scheduler.theta_tar", theta_tar, lo_open=True, hi_open=True)
    nu_d = r.get("scheduler", "nu_d", float, required=True)
    _prob("scheduler.nu_d", nu_d)
    epsilon = r.get("scheduler", "epsilon", float)
    _prob("scheduler.epsilon", epsilon)
    if epsilon is not None and epsilon > theta_tar:
        raise ParseError("scheduler.epsilon", f"continuity bound requires 0 <= epsilon <= theta_tar ({theta_tar})")
    epsilons = r.get_list("scheduler", "epsilons", float)
    for e in epsilons:
        _prob("scheduler.epsilons", e)
        if e > theta_tar:
            raise ParseError("scheduler.epsilons", f"continuity bound requires every epsilon <= theta_tar ({theta_tar})")
    delta_e = r.get("scheduler", "delta_e_db", float)
    if delta_e is not None and delta_e < 0:
        raise ParseError("scheduler.delta_e_db", "target gain must be nonnegative")
    C = r.get("scheduler", "c", float, 0.5)
    if C <= 0:
        raise ParseError("scheduler.C", "spectral efficiency must be positive")
    delta = r.get("scheduler", "delta", float, 0.01)
    if not 0 < delta < 1:
        raise ParseError("scheduler.delta", "forbidden radius must lie in (0, 1)")
    alpha_pl = r.get("scheduler", "path_loss_exponent", float, 2.0)
    if alpha_pl <= 0:
        raise ParseError("scheduler.path_loss_exponent", "must be positive")
    q_lo = r.get("scheduler", "fading_quantile_lo", float, 1e-10)
    q_hi = r.get("scheduler", "fading_quantile_hi", float, 1.0 - 1e-10)
    if not 0 < q_lo < q_hi < 1:
        raise ParseError("scheduler.fading_quantile_lo", "need 0 < fading_quantile_lo < fading_quantile_hi < 1")

    sched = SchedulerConfig(B, N, theta_tar, nu_d, epsilon, epsilons, delta_e, C, delta, alpha_pl, q_lo, q_hi)

    anneal = AnnealSettings(
        T0=r.get("anneal", "t0", float, 1.0),
        c_sa=r.get("anneal", "c_sa", float, 1.0),
        n_temps=r.get("anneal", "n_temps", int, 100),
        proposals_per_temp=r.get("anneal", "proposals_per_temp", int),
        step_scale=r.get("anneal", "step_scale", float, 0.25),
        grid_size=r.get("anneal", "grid_size", int, 1024),
    )
    if anneal.T0 <= 0:
        raise ParseError("anneal.T0", "must be positive")
    if anneal.c_sa <= 0:
        raise ParseError("anneal.c_sa", "must be positive")
    if anneal.n_temps < 1:
        raise ParseError("anneal.n_temps", "must be at least 1")
    if anneal.proposals_per_temp is not None and anneal.proposals_per_temp < 1:
        raise ParseError("anneal.proposals_per_temp", "must be at least 1")
    if not 0 < anneal.step_scale <= 1:
        raise ParseError("anneal.step_scale", "must lie in (0, 1]")
    if anneal.grid_size < 16:
        raise ParseError("anneal.grid_size", "must be at least 16")

    policy = r.get("sim", "policy", str)
    if policy is not None and base_dir is not None and not Path(policy).is_absolute():
        policy = str(base_dir / policy)
    sim = SimSettings(
        K=r.get("sim", "k", int, 1000),
        T=r.get("sim", "t", int, 10_000),
        warmup=r.get("sim", "warmup", int, 100),
        Z0=r.get("sim", "z0", float, 1.0),
        policy=policy,
        trace=r.get("sim", "trace", _bool, False),
    )
    if sim.K < 1:
        raise ParseError("sim.K", "must be at least 1")
    if sim.T < 1:
        raise ParseError("sim.T", "must be at least 1")
    if sim.warmup < 0:
        raise ParseError("sim.warmup", "must be nonnegative")
    if sim.Z0 <= 0:
        raise ParseError("sim.Z0", "must be positive")
    return check_mode(ExperimentSpec(
        mode=mode, scheduler=sched, anneal=anneal, sim=sim,
        output_path=r.get("output", "path", str, "results.csv"),
        trace_dir=r.get("output", "trace_dir", str),
        seeds=seeds, workers=workers,
    ))


def check_mode(spec: ExperimentSpec) -> ExperimentSpec:
    """Check the keys a mode depends on; returns ``spec`` unchanged."""
    sched = spec.scheduler
    if spec.mode not in MODES:
        raise ParseError("experiment.mode", f"unknown mode {spec.mode!r}; expected one of {', '.join(MODES)}")
    if spec.mode == "sweep-epsilon" and not sched.epsilons:
        raise ParseError("scheduler.epsilons", "sweep-epsilon needs a list of epsilons")
    if spec.mode == "buffer-search":
        if sched.epsilon is None:
            raise ParseError("scheduler.epsilon", "buffer-search needs an epsilon")
        if sched.delta_e_db is None:
            raise ParseError("scheduler.delta_e_db", "buffer-search needs a target gain")
    if spec.mode == "simulate" and spec.sim.policy is None:
        raise ParseError("sim.policy", "simulate mode needs a policy fixture")
    return spec


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError("<file>", f"cannot read {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent)
