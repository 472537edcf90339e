"""Virtual-user fading and the large-system energy per bit.

Every scheduled packet counts as one virtual user (VU). The VU fading
density is the base fading density reweighted by the expected number of
packets sent at that fading level:

    p_vu(y) = c * sum_p pi_p * L(p, y) * p_f(y)

``L(p, y)`` is a step function of ``y`` (one step per threshold), so the
VU cdf is a weighted sum of truncated fading cdfs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (DEFAULT_GRID_SIZE, DistributionGrid, FadingModel, PathLossModel,
                      path_loss_distribution, product_distribution)
from .errors import DegenerateDistributionError, DivergentEnergyError
from .fsmc import PolicyMatrix, ThresholdTable

LN2 = np.log(2.0)
# Fine enough that the tabulated VU density integrates to one within 1e-6.
VU_GRID_SIZE = 4096


@dataclass(frozen=True)
class VuFading:
    """Exact VU fading distribution as a mixture of truncated fading laws.

    ``breakpoints[j]`` is a threshold above which one more packet is sent
    by a user in a state of stationary weight ``weights[j]``.
    """

    fading: FadingModel
    breakpoints: np.ndarray
    weights: np.ndarray
    normalizer: float

    @classmethod
    def from_policy(cls, policy: PolicyMatrix, pi, table: ThresholdTable,
                    fading: FadingModel) -> "VuFading":
        if len(pi) != policy.space.n_states or table.space != policy.space:
            raise ValueError("policy, stationary vector and thresholds disagree on the state space")
        t, w = [], []
        for p, row in enumerate(table.kappa):
            if pi[p] <= 0:
                continue
            for k in row:
                if np.isfinite(k):
                    t.append(k)
                    w.append(pi[p])
        t = np.asarray(t, dtype=float)
        w = np.asarray(w, dtype=float)
        mass = float(np.sum(w * fading.survival(t))) if len(t) else 0.0
        if mass <= 0:
            raise DegenerateDistributionError("policy never schedules a packet")
        return cls(fading, t, w, 1.0 / mass)

    @property
    def lower(self) -> float:
        return self.fading.lower

    @property
    def upper(self) -> float:
        return self.fading.upper

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        Fy = self.fading.cdf(np.maximum(y, 0.0))[..., None]
        Ft = self.fading.cdf(self.breakpoints)
        out = self.normalizer * (np.clip(Fy - Ft, 0.0, None) @ self.weights)
        return out if out.ndim else float(out)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        level = (y[..., None] > self.breakpoints) @ self.weights
        out = self.normalizer * level * self.fading.pdf(np.maximum(y, 0.0))
        return out if out.ndim else float(out)

    def grid(self, grid_size: int = DEFAULT_GRID_SIZE) -> DistributionGrid:
        """Tabulate on a log-grid with both sides of every threshold included."""
        x = np.geomspace(self.lower, self.upper, grid_size)
        inside = self.breakpoints[(self.breakpoints > self.lower) & (self.breakpoints < self.upper)]
        x = np.unique(np.concatenate([x, inside, inside * (1.0 + 1e-12)]))
        return DistributionGrid(x, np.clip(self.cdf(x), 0.0, 1.0), self.pdf(x))


@dataclass(frozen=True)
class VuDistribution:
    fading_grid: DistributionGrid
    channel_grid: DistributionGrid
    normalizer: float


@dataclass(frozen=True)
class EnergyResult:
    eb_n0_linear: float
    eb_n0_db: float
    spectral_efficiency: float

    @classmethod
    def from_linear(cls, value: float, C: float) -> "EnergyResult":
        return cls(float(value), float(10.0 * np.log10(value)), float(C))


def vu_fading_pdf(policy: PolicyMatrix, pi, table: ThresholdTable, fading: FadingModel,
                  grid_size: int = VU_GRID_SIZE) -> DistributionGrid:
    """Tabulated fading density seen by scheduled packets."""
    return VuFading.from_policy(policy, pi, table, fading).grid(grid_size)


def vu_distribution(policy: PolicyMatrix, pi, table: ThresholdTable, fading: FadingModel,
                    path_loss: PathLossModel, grid_size: int = DEFAULT_GRID_SIZE,
                    fading_grid_size: int = VU_GRID_SIZE) -> VuDistribution:
    vu = VuFading.from_policy(policy, pi, table, fading)
    pl = path_loss_distribution(path_loss, grid_size)
    channel = product_distribution(vu, pl, grid_size)
    return VuDistribution(vu.grid(fading_grid_size), channel, vu.normalizer)


def stieltjes_energy(x, P, C: float) -> float:
    """``log(2) * int 2**(C P(x)) / x dP(x)`` for a tabulated cdf.

    Substituting ``u = P(x)``, the factor ``2**(C u)`` is integrated exactly
    over each cdf increment and ``1/x`` is replaced by its mean over the
    panel assuming mass uniform in ``log x``. Atoms integrate exactly.
    """
    x = np.asarray(x, dtype=float)
    P = np.clip(np.asarray(P, dtype=float), 0.0, 1.0)
    if C <= 0:
        raise ValueError("spectral efficiency must be positive")
    if x[0] <= 0:
        if P[0] > 0 or P[1] > 0:
            raise DivergentEnergyError("channel distribution has mass at zero gain")
        x, P = x[1:], P[1:]
    lift = 2.0 ** (C * P)
    panels = np.diff(lift) / C
    h = np.log(x[1:]) - np.log(x[:-1])
    safe_h = np.where(h > 0, h, 1.0)
    inv_mean = np.where(h > 0, -np.expm1(-safe_h) / safe_h, 1.0) / x[:-1]
    total = np.sum(panels * inv_mean)
    total += (lift[0] - 1.0) / C / x[0]
    total += (2.0 ** C - lift[-1]) / C / x[-1]
    return float(total)


def energy_per_bit(vu, C: float) -> EnergyResult:
    """Large-system energy per bit for a VU channel distribution.

    ``vu`` may be a :class:`VuDistribution` or a bare channel grid.
    """
    grid = getattr(vu, "channel_grid", vu)
    return EnergyResult.from_linear(stieltjes_energy(grid.support, grid.cdf_values, C), C)


class EnergyKernel:
    """Precomputed path-loss quadrature for fast energy evaluation.

    The channel cdf of a VU fading mixture is

        P(x) = c * sum_j w_j * sum_k m_k * (F(x/s_k) - F(t_j))_+

    and the inner sum only runs over path-loss cells with ``s_k < x/t_j``.
    Cumulative sums over ``k`` make each threshold cost O(grid_size).
    """

    def __init__(self, fading: FadingModel, path_loss: PathLossModel, C: float,
                 grid_size: int = 1024, path_loss_grid_size: int = 1024):
        if C <= 0:
            raise ValueError("spectral efficiency must be positive")
        self.fading = fading
        self.path_loss = path_loss
        self.C = float(C)
        s, m = path_loss_distribution(path_loss, path_loss_grid_size).masses()
        keep = m > 0
        s, m = s[keep], m[keep]
        order = np.argsort(s)
        self._s, self._m = s[order], m[order]
        self.x = np.geomspace(fading.lower * self._s[0], fading.upper * self._s[-1], grid_size)
        Fxs = fading.cdf(self.x[:, None] / self._s[None, :])
        self._cum_f = np.hstack([np.zeros((grid_size, 1)), np.cumsum(Fxs * self._m, axis=1)])
        self._cum_m = np.concatenate([[0.0], np.cumsum(self._m)])
        self._rows = np.arange(grid_size)

    def channel_cdf(self, vu: VuFading) -> np.ndarray:
        t = vu.breakpoints
        with np.errstate(divide="ignore"):
            cut = self.x[None, :] / t[:, None]
        k = np.searchsorted(self._s, cut.ravel(), side="left").reshape(cut.shape)
        Ft = self.fading.cdf(t)[:, None]
        parts = self._cum_f[self._rows[None, :], k] - Ft * self._cum_m[k]
        return np.clip(vu.normalizer * (vu.weights @ parts), 0.0, 1.0)

    def energy(self, vu: VuFading) -> EnergyResult:
        P = np.maximum.accumulate(self.channel_cdf(vu))
        return EnergyResult.from_linear(stieltjes_energy(self.x, P, self.C), self.C)

    def policy_energy(self, policy: PolicyMatrix, pi, table: ThresholdTable) -> EnergyResult:
        return self.energy(VuFading.from_policy(policy, pi, table, self.fading))
