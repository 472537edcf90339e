"""Packet-level Monte Carlo simulation of K users running a threshold policy.

Each slot every user receives one packet, draws a fading value, and
applies :func:`~lossy_sched.fsmc.decide`. All packets scheduled in a slot
(over all users) are served by superposition coding with successive
interference cancellation, each packet being a virtual user at rate C/K.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import FadingModel, PathLossModel
from .errors import ConfigError
from .fsmc import PolicyMatrix, ThresholdTable, decide_many, recover_thresholds

Z95 = 1.959963984540054


def _sic_arrays(h: np.ndarray, R: np.ndarray, Z0: float) -> float:
    if h.size == 0:
        return 0.0
    if np.any(h <= 0) or np.any(R <= 0):
        raise ValueError("channel gains and rates must be positive")
    order = np.argsort(h, kind="stable")
    h, R = h[order], R[order]
    before = np.cumsum(R) - R
    # 2**(a + r) - 2**a, without cancellation for small r
    steps = np.exp2(before) * np.expm1(R * np.log(2.0))
    return float(np.sum(Z0 / h * steps))


def sic_energy(scheduled, Z0: float = 1.0) -> float:
    """Total transmit energy for ``(gain, rate)`` pairs decoded by SIC.

    Users are sorted by increasing gain; the ``k``-th pays
    ``Z0 / h_k * (2**(R_1+..+R_k) - 2**(R_1+..+R_{k-1}))``.
    """
    arr = np.asarray(list(scheduled) if not isinstance(scheduled, np.ndarray) else scheduled, dtype=float)
    if arr.size == 0:
        return 0.0
    arr = arr.reshape(-1, 2)
    return _sic_arrays(arr[:, 0], arr[:, 1], Z0)


@dataclass(frozen=True)
class UserState:
    """Queue-level view of a chain state: ``state = queue + drop_streak``."""

    path_loss: float
    state: int
    queue: int
    drop_streak: int

    @classmethod
    def from_state(cls, p: int, B: int, path_loss: float) -> "UserState":
        queue = min(p, B)
        return cls(path_loss, p, queue, p - queue)


@dataclass(frozen=True)
class SimConfig:
    table: ThresholdTable
    nu_d: float
    K: int = 1000
    T: int = 10_000
    seed: int = 0
    Z0: float = 1.0
    C: float = 0.5
    fading: FadingModel = field(default_factory=FadingModel)
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    warmup: int = 100
    trace: bool = False

    def __post_init__(self):
        if self.K < 1 or self.T < 1:
            raise ConfigError("K and T must be at least 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be nonnegative")
        if not 0 <= self.nu_d <= 1:
            raise ConfigError("nu_d must be a probability")
        if self.C <= 0 or self.Z0 <= 0:
            raise ConfigError("C and Z0 must be positive")
        if not isinstance(self.table, ThresholdTable):
            raise ConfigError("table must be a ThresholdTable")
        lengths = [len(r) for r in self.table.kappa]
        if lengths != self.table.space.row_lengths():
            raise ConfigError("threshold rows do not match the state space")
        for p, r in enumerate(self.table.kappa):
            if np.any(np.diff(r) > 0) or np.any(r < 0) or np.any(np.isnan(r)):
                raise ConfigError(f"thresholds of state {p} must be nonnegative and nonincreasing")

    @property
    def rate(self) -> float:
        return self.C / self.K

    @classmethod
    def from_policy(cls, policy: PolicyMatrix, **kwargs) -> "SimConfig":
        fading = kwargs.get("fading", FadingModel())
        return cls(table=recover_thresholds(policy, fading), nu_d=policy.nu_d, **kwargs)


@dataclass(frozen=True)
class SimReport:
    theta_hat: float
    theta_halfwidth: float
    theta_se: float
    gamma_hat: float
    gamma_halfwidth: float
    gamma_se: float
    energy_per_scheduled_bit_db: float
    energy_per_delivered_bit_db: float
    state_occupancy: np.ndarray
    occupancy_se: np.ndarray
    transition_counts: np.ndarray
    total_energy: float
    scheduled_packets: int
    delivered_packets: int
    K: int
    T: int
    final_states: np.ndarray
    path_loss: np.ndarray
    trace: list | None = None

    CSV_FIELDS = ("K", "T", "theta_hat", "theta_halfwidth", "gamma_hat", "gamma_halfwidth",
                  "energy_per_scheduled_bit_db", "energy_per_delivered_bit_db")

    def csv_row(self) -> list[str]:
        probs = [f"{getattr(self, k):.6g}" for k in self.CSV_FIELDS[2:6]]
        return [str(self.K), str(self.T)] + probs + [f"{getattr(self, k):.2f}" for k in self.CSV_FIELDS[6:]]

    def transition_frequencies(self) -> np.ndarray:
        rows = self.transition_counts.sum(axis=1, keepdims=True)
        return np.divide(self.transition_counts, rows, out=np.zeros_like(self.transition_counts, dtype=float),
                         where=rows > 0)

    def user_state(self, k: int, B: int) -> UserState:
        return UserState.from_state(int(self.final_states[k]), B, float(self.path_loss[k]))


def _rate_and_se(per_user: np.ndarray, T: int) -> tuple[float, float]:
    mean = float(per_user.mean())
    if len(per_user) > 1:
        se = float(per_user.std(ddof=1) / np.sqrt(len(per_user)))
    else:
        se = float(np.sqrt(max(mean * (1 - mean), 0.0) / T))
    return mean, se


def run(cfg: SimConfig) -> SimReport:
    """Simulate ``cfg.T`` slots after ``cfg.warmup`` unrecorded slots.

    Standard errors come from the spread of per-user time averages, which
    are independent across users, so the within-user correlation of the
    chain is accounted for.
    """
    space = cfg.table.space
    B, M = space.B, space.M
    K, T = cfg.K, cfg.T
    rng = np.random.default_rng(cfg.seed)
    s = cfg.path_loss.sample(rng, K)
    p = np.zeros(K, dtype=np.int64)
    kap = cfg.table.padded()
    nu_s = 1.0 - cfg.nu_d
    R = cfg.rate
    users = np.arange(K)

    drops = np.zeros(K, dtype=np.int64)
    violations = np.zeros(K, dtype=np.int64)
    occupancy = np.zeros((K, M + 1), dtype=np.int64)
    transitions = np.zeros((M + 1) * (M + 1), dtype=np.int64)
    total_energy = 0.0
    n_sched = 0
    n_deliv = 0
    trace = [] if cfg.trace else None

    for slot in range(cfg.warmup + T):
        f = cfg.fading.sample(rng, K)
        ok = rng.random(K) < nu_s
        q, L = decide_many(p, f, cfg.table, kap)
        sched = L > 0
        success = sched & ok
        q = np.where(sched & ~ok, np.minimum(p + 1, M), q)
        if slot >= cfg.warmup:
            lost = ~success
            drops += lost & (p >= B)
            violations += lost & (p == M)
            occupancy[users, p] += 1
            transitions += np.bincount(p * (M + 1) + q, minlength=(M + 1) ** 2)
            Ls = L[sched]
            gains = np.repeat(s[sched] * f[sched], Ls)
            e = _sic_arrays(gains, np.full(gains.size, R), cfg.Z0)
            total_energy += e
            n_sched += int(Ls.sum())
            n_deliv += int(L[success].sum())
            if trace is not None:
                trace.append((slot - cfg.warmup, int(Ls.sum()), e))
        p = q

    theta, theta_se = _rate_and_se(drops / T, T)
    gamma, gamma_se = _rate_and_se(violations / T, T)
    occ_user = occupancy / T
    occ = occ_user.mean(axis=0)
    occ_se = occ_user.std(axis=0, ddof=1) / np.sqrt(K) if K > 1 else np.sqrt(occ * (1 - occ) / T)
    e_sched = total_energy / (n_sched * R) if n_sched else np.inf
    e_deliv = total_energy / (n_deliv * R) if n_deliv else np.inf
    with np.errstate(divide="ignore"):
        e_sched_db = float(10 * np.log10(e_sched))
        e_deliv_db = float(10 * np.log10(e_deliv))
    return SimReport(
        theta_hat=theta, theta_halfwidth=Z95 * theta_se, theta_se=theta_se,
        gamma_hat=gamma, gamma_halfwidth=Z95 * gamma_se, gamma_se=gamma_se,
        energy_per_scheduled_bit_db=e_sched_db, energy_per_delivered_bit_db=e_deliv_db,
        state_occupancy=occ, occupancy_se=occ_se,
        transition_counts=transitions.reshape(M + 1, M + 1),
        total_energy=total_energy, scheduled_packets=n_sched, delivered_packets=n_deliv,
        K=K, T=T, final_states=p, path_loss=s, trace=trace,
    )


def occupancy_check(report: SimReport, pi) -> float:
    """Largest per-state gap between simulated occupancy and ``pi``."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != report.state_occupancy.shape:
        raise ConfigError("stationary vector and occupancy histogram have different lengths")
    return float(np.max(np.abs(report.state_occupancy - pi)))
