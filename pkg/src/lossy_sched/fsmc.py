"""Finite-state Markov chain of the threshold scheduler.

State ``p`` counts buffered packets plus packets dropped in a row, so
``0 <= p <= M = B + N``. From state ``p`` the scheduler either sends
``L`` packets and lands in ``q = mu(p) + 1 - L`` (``mu(p) = min(p, B)``),
or sends nothing and moves forward to ``min(p + 1, M)``. A failed
transmission is treated like not scheduling.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .channel import FadingModel
from .errors import InfeasiblePolicyError, NumericalError, ReducibleChainError

ROW_TOL = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class StateSpace:
    B: int
    N: int

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 0:
            raise ValueError("buffer size B must be a nonnegative integer")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("continuity parameter N must be a positive integer")

    @property
    def M(self) -> int:
        return self.B + self.N

    @property
    def n_states(self) -> int:
        return self.M + 1

    def mu(self, p: int) -> int:
        return min(p, self.B)

    def row_lengths(self) -> list[int]:
        return [self.mu(p) + 1 for p in range(self.n_states)]


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PolicyMatrix:
    """Scheduled-transition probabilities, one row per state.

    ``alpha_hat[p][q]`` is the probability of scheduling ``mu(p) - q + 1``
    packets from state ``p`` (landing in ``q`` if the transmission works).
    """

    space: StateSpace
    alpha_hat: tuple
    nu_d: float

    def __post_init__(self):
        rows = tuple(_readonly(r) for r in self.alpha_hat)
        object.__setattr__(self, "alpha_hat", rows)
        if not 0.0 <= self.nu_d <= 1.0:
            raise ValueError("nu_d must be a probability")
        expected = self.space.row_lengths()
        if [len(r) for r in rows] != expected:
            raise ValueError(f"row lengths {[len(r) for r in rows]} do not match state space {expected}")
        for p, r in enumerate(rows):
            if np.any(r < 0) or np.any(r > 1) or not np.all(np.isfinite(r)):
                raise InfeasiblePolicyError(f"row {p} has entries outside [0, 1]")
            if r.sum() > 1 + ROW_TOL:
                raise InfeasiblePolicyError(f"row {p} sums to {r.sum():.15g} > 1")

    @property
    def nu_s(self) -> float:
        return 1.0 - self.nu_d

    @property
    def M(self) -> int:
        return self.space.M

    def residual(self, p: int) -> float:
        """Probability of scheduling nothing in state ``p``."""
        return max(0.0, 1.0 - float(self.alpha_hat[p].sum()))

    def scheduled_mass(self) -> np.ndarray:
        return np.array([r.sum() for r in self.alpha_hat])

    def flat(self) -> np.ndarray:
        return np.concatenate(self.alpha_hat)

    def with_rows(self, rows) -> "PolicyMatrix":
        return PolicyMatrix(self.space, tuple(rows), self.nu_d)

    @classmethod
    def always_schedule(cls, space: StateSpace, nu_d: float) -> "PolicyMatrix":
        """Every state sends its whole buffer plus the new arrival."""
        rows = [np.eye(1, n)[0] for n in space.row_lengths()]
        return cls(space, tuple(rows), nu_d)

    @classmethod
    def never_schedule(cls, space: StateSpace, nu_d: float) -> "PolicyMatrix":
        return cls(space, tuple(np.zeros(n) for n in space.row_lengths()), nu_d)

    @classmethod
    def uniform(cls, space: StateSpace, nu_d: float) -> "PolicyMatrix":
        """Each row spreads mass evenly over its entries and the no-schedule event."""
        return cls(space, tuple(np.full(n, 1.0 / (n + 1)) for n in space.row_lengths()), nu_d)

    @classmethod
    def constant(cls, space: StateSpace, nu_d: float, value: float) -> "PolicyMatrix":
        """Schedule exactly one packet with probability ``value`` in every state."""
        rows = []
        for n in space.row_lengths():
            r = np.zeros(n)
            r[-1] = value
            rows.append(r)
        return cls(space, tuple(rows), nu_d)

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"# B={self.space.B} N={self.space.N} nu_d={self.nu_d:.17g}\n")
        for p, r in enumerate(self.alpha_hat):
            buf.write(",".join([str(p)] + [f"{v:.17g}" for v in r]) + "\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "PolicyMatrix":
        header = None
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                header = dict(tok.split("=") for tok in line[1:].split())
                continue
            fields = line.split(",")
            if int(fields[0]) != len(rows):
                raise ValueError(f"policy rows out of order at state {fields[0]}")
            rows.append([float(v) for v in fields[1:]])
        if header is None:
            raise ValueError("policy text lacks the '# B=.. N=.. nu_d=..' header")
        space = StateSpace(int(header["B"]), int(header["N"]))
        return cls(space, tuple(rows), float(header["nu_d"]))

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "PolicyMatrix":
        return cls.loads(Path(path).read_text())


@dataclass(frozen=True)
class ThresholdTable:
    """Fading thresholds; row ``p`` is nonincreasing in ``q``.

    ``f > kappa[p][0]`` sends the most packets. ``inf`` marks a band that
    is never used.
    """

    space: StateSpace
    kappa: tuple

    def __post_init__(self):
        object.__setattr__(self, "kappa", tuple(_readonly(r) for r in self.kappa))
        if [len(r) for r in self.kappa] != self.space.row_lengths():
            raise ValueError("threshold rows do not match the state space")

    def padded(self) -> np.ndarray:
        """(M+1, B+1) array with unused slots set to +inf."""
        out = np.full((self.space.n_states, self.space.B + 1), np.inf)
        for p, r in enumerate(self.kappa):
            out[p, :len(r)] = r
        return out


def recover_thresholds(policy: PolicyMatrix, fading: FadingModel) -> ThresholdTable:
    """Invert the fading tail so that each band carries its ``alpha_hat`` mass."""
    rows = []
    for p, a in enumerate(policy.alpha_hat):
        cum = np.cumsum(a)
        if cum[-1] > 1 + ROW_TOL:
            raise InfeasiblePolicyError(f"row {p}: cumulative scheduling probability {cum[-1]:.15g} > 1")
        rows.append(fading.inverse_survival(np.minimum(cum, 1.0)))
    return ThresholdTable(policy.space, tuple(rows))


def decide(p: int, f: float, table: ThresholdTable) -> tuple[int, int]:
    """Next state and packet count for one user in state ``p`` seeing fading ``f``."""
    space = table.space
    k = table.kappa[p]
    L = int(np.count_nonzero(k < f))
    if L == 0:
        return min(p + 1, space.M), 0
    return space.mu(p) + 1 - L, L


def decide_many(p: np.ndarray, f: np.ndarray, table: ThresholdTable,
                padded: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`decide` over users."""
    space = table.space
    k = table.padded() if padded is None else padded
    L = np.count_nonzero(k[p] < f[:, None], axis=1)
    mu = np.minimum(p, space.B)
    q = np.where(L > 0, mu + 1 - L, np.minimum(p + 1, space.M))
    return q, L


@dataclass(frozen=True)
class TransitionMatrix:
    q_full: np.ndarray
    q_sched: np.ndarray
    q_csi: np.ndarray


def assemble(policy: PolicyMatrix) -> TransitionMatrix:
    """Full transition matrix split into the scheduling part and the CSI-loss part."""
    space = policy.space
    n, M = space.n_states, space.M
    q_sched = np.zeros((n, n))
    q_csi = np.zeros((n, n))
    for p, a in enumerate(policy.alpha_hat):
        mu = space.mu(p)
        q_sched[p, :mu + 1] = policy.nu_s * a
        fwd = min(p + 1, M)
        q_sched[p, fwd] += policy.residual(p)
        q_csi[p, fwd] = policy.nu_d * a.sum()
    q_full = q_sched + q_csi
    dev = np.max(np.abs(q_full.sum(axis=1) - 1.0))
    assert dev <= ROW_TOL, f"transition rows deviate from 1 by {dev:.3g}"
    for a in (q_full, q_sched, q_csi):
        a.setflags(write=False)
    return TransitionMatrix(q_full, q_sched, q_csi)


def _solve_stationary(Q: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    A = Q.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"stationary solve failed: {exc}") from exc
    return pi


def _closed_classes(Q: np.ndarray) -> list[np.ndarray]:
    n = Q.shape[0]
    n_comp, labels = connected_components(Q > 0, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(n), members)
        if not np.any(Q[np.ix_(members, outside)] > 0):
            closed.append(members)
    return closed


def steady_state(matrix) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix.

    Transient states get zero mass. A chain with more than one closed
    class has no unique answer and raises :class:`ReducibleChainError`.
    """
    Q = np.asarray(getattr(matrix, "q_full", matrix), dtype=float)
    try:
        pi = _solve_stationary(Q)
    except NumericalError:
        pi = None
    if pi is None or np.any(pi < -RESIDUAL_TOL) or np.max(np.abs(pi @ Q - pi)) > RESIDUAL_TOL:
        # Singular or ill-conditioned: solve on the unique closed class.
        closed = _closed_classes(Q)
        if len(closed) != 1:
            raise ReducibleChainError(closed)
        rec = closed[0]
        pi = np.zeros(Q.shape[0])
        pi[rec] = _solve_stationary(Q[np.ix_(rec, rec)])
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.max(np.abs(pi @ Q - pi))
    if resid > RESIDUAL_TOL:
        raise NumericalError(f"stationarity residual {resid:.3g} exceeds {RESIDUAL_TOL}")
    return pi


def violation_probability(policy: PolicyMatrix, pi) -> float:
    """Steady-state rate of drops beyond the continuity limit (state-M self loop)."""
    M = policy.M
    return float((1.0 - policy.nu_s * policy.alpha_hat[M].sum()) * pi[M])


def average_drop_rate(policy: PolicyMatrix, pi) -> float:
    """Steady-state fraction of arriving packets that are dropped."""
    B = policy.space.B
    return float(sum((1.0 - policy.nu_s * policy.alpha_hat[p].sum()) * pi[p]
                     for p in range(B, policy.M + 1)))


@dataclass(frozen=True)
class ChainSolution:
    pi: np.ndarray
    gamma: float
    theta_r: float
    matrix: TransitionMatrix


def solve_chain(policy: PolicyMatrix) -> ChainSolution:
    matrix = assemble(policy)
    pi = steady_state(matrix)
    pi.setflags(write=False)
    return ChainSolution(pi, violation_probability(policy, pi), average_drop_rate(policy, pi), matrix)


def dump_matrix(q: np.ndarray) -> str:
    return "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in np.asarray(q))


def load_matrix(text: str) -> np.ndarray:
    return np.array([[float(v) for v in line.split(",")]
                     for line in text.splitlines() if line.strip() and not line.startswith("#")])
