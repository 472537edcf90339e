"""Fading, path-loss and channel-gain distributions.

Channel gain of a user is the product of a slow path-loss term and a
per-slot small-scale fading term. Distributions without a closed form
(the product, and later the scheduled virtual-user channel) are carried
as :class:`DistributionGrid` values on a log-spaced support.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError

DEFAULT_GRID_SIZE = 2048
# Quantile range covered by fading grids. The energy integrand 1/x makes
# the lower bound matter whenever a policy schedules in deep fades.
DEFAULT_QUANTILE_LO = 1e-10
DEFAULT_QUANTILE_HI = 1.0 - 1e-10

FADING_KINDS = ("exponential-unit-mean",)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DistributionGrid:
    """Tabulated cdf/pdf of a nonnegative random variable.

    Between support points the cdf is interpolated linearly. Mass below
    the first support point is ``cdf_values[0]``; mass above the last is
    ``1 - cdf_values[-1]``.
    """

    support: np.ndarray
    cdf_values: np.ndarray
    pdf_values: np.ndarray

    def __post_init__(self):
        x = _frozen(self.support)
        F = _frozen(self.cdf_values)
        p = _frozen(self.pdf_values)
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "cdf_values", F)
        object.__setattr__(self, "pdf_values", p)
        if x.ndim != 1 or x.shape != F.shape or x.shape != p.shape:
            raise ValueError("support, cdf_values and pdf_values must be 1-D of equal length")
        if len(x) < 2:
            raise ValueError("a grid needs at least two support points")
        if np.any(x < 0) or np.any(np.diff(x) <= 0):
            raise ValueError("support must be nonnegative and strictly increasing")
        if np.any(F < -1e-15) or np.any(F > 1 + 1e-12) or np.any(np.diff(F) < -1e-14):
            raise ValueError("cdf_values must be nondecreasing within [0, 1]")
        if np.any(p < 0):
            raise ValueError("pdf_values must be nonnegative")

    @classmethod
    def point_mass(cls, x0: float, rel_width: float = 1e-12) -> "DistributionGrid":
        """Unit mass at ``x0``, represented as a box of relative width ``rel_width``."""
        if x0 <= 0:
            raise DomainError("point mass location must be positive")
        lo = x0 * (1.0 - rel_width)
        height = 1.0 / (x0 - lo)
        return cls([lo, x0], [0.0, 1.0], [height, height])

    @property
    def lower(self) -> float:
        return float(self.support[0])

    @property
    def upper(self) -> float:
        return float(self.support[-1])

    def cdf(self, x):
        return np.interp(x, self.support, self.cdf_values, left=0.0, right=1.0)

    def pdf(self, x):
        return np.interp(x, self.support, self.pdf_values, left=0.0, right=0.0)

    def quantile(self, u):
        """Smallest ``x`` with ``cdf(x) >= u``, linearly interpolated."""
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("quantile level must lie in [0, 1]")
        x, F = self.support, self.cdf_values
        idx = np.clip(np.searchsorted(F, u, side="left"), 1, len(x) - 1)
        F0, F1 = F[idx - 1], F[idx]
        span = np.where(F1 > F0, F1 - F0, 1.0)
        w = np.clip((u - F0) / span, 0.0, 1.0)
        out = x[idx - 1] + w * (x[idx] - x[idx - 1])
        out = np.where(u <= F[0], x[0], out)
        return out if out.ndim else float(out)

    def masses(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes: interval masses placed at interval midpoints.

        Tail mass outside the support is attached to the end points, so the
        returned masses always sum to one.
        """
        x, F = self.support, self.cdf_values
        lo, hi = x[:-1], x[1:]
        mid = np.where(lo > 0, np.sqrt(lo * hi), 0.5 * (lo + hi))
        locs = np.concatenate([[x[0]], mid, [x[-1]]])
        m = np.concatenate([[F[0]], np.diff(F), [1.0 - F[-1]]])
        return locs, np.clip(m, 0.0, None)

    def integrate(self, values=None) -> float:
        """Trapezoid integral of ``values`` (default: the pdf) over the log-grid."""
        values = self.pdf_values if values is None else np.asarray(values, dtype=float)
        x = self.support
        pos = x > 0
        t = np.log(x[pos])
        g = values[pos] * x[pos]
        return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(t)))

    def interval_mismatch(self) -> float:
        """Largest gap between a log-trapezoid pdf panel and its cdf increment."""
        x, F, p = self.support, self.cdf_values, self.pdf_values
        if x[0] <= 0:
            x, F, p = x[1:], F[1:], p[1:]
        t = np.log(x)
        g = p * x
        panels = 0.5 * (g[1:] + g[:-1]) * np.diff(t)
        return float(np.max(np.abs(panels - np.diff(F))))

    def scaled(self, factor: float) -> "DistributionGrid":
        """Distribution of ``factor * X``."""
        if factor <= 0:
            raise DomainError("scale factor must be positive")
        return DistributionGrid(self.support * factor, self.cdf_values, self.pdf_values / factor)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["support", "cdf", "pdf"])
            for row in zip(self.support, self.cdf_values, self.pdf_values):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "DistributionGrid":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


@dataclass(frozen=True)
class FadingModel:
    """Small-scale fading power distribution.

    Only ``exponential-unit-mean`` (Rayleigh amplitude, unit mean power) is
    implemented; ``mean`` rescales it.
    """

    kind: str = "exponential-unit-mean"
    mean: float = 1.0
    quantile_lo: float = DEFAULT_QUANTILE_LO
    quantile_hi: float = DEFAULT_QUANTILE_HI

    def __post_init__(self):
        if self.kind not in FADING_KINDS:
            raise ValueError(f"unknown fading kind {self.kind!r}; expected one of {FADING_KINDS}")
        if self.mean <= 0:
            raise ValueError("fading mean must be positive")
        if not 0 < self.quantile_lo < self.quantile_hi < 1:
            raise ValueError("need 0 < quantile_lo < quantile_hi < 1")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("fading cdf is defined for x >= 0 only")
        out = -np.expm1(-x / self.mean)
        return out if out.ndim else float(out)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(-np.maximum(x, 0.0) / self.mean)
        return out if out.ndim else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, np.exp(-np.maximum(x, 0.0) / self.mean) / self.mean, 0.0)
        return out if out.ndim else float(out)

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u >= 1)) or np.any(np.isnan(u)):
            raise DomainError("fading inverse cdf needs 0 <= u < 1")
        out = -self.mean * np.log1p(-u)
        return out if out.ndim else float(out)

    def inverse_survival(self, tail):
        """Fading value exceeded with probability ``tail``; ``tail = 0`` maps to ``inf``."""
        tail = np.asarray(tail, dtype=float)
        if np.any((tail < 0) | (tail > 1)):
            raise DomainError("tail probability must lie in [0, 1]")
        with np.errstate(divide="ignore"):
            out = -self.mean * np.log(tail)
        out = out + 0.0
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.exponential(self.mean, size)

    @property
    def lower(self) -> float:
        return float(self.inverse_cdf(self.quantile_lo))

    @property
    def upper(self) -> float:
        return float(self.inverse_cdf(self.quantile_hi))

    def grid(self, grid_size: int = DEFAULT_GRID_SIZE) -> DistributionGrid:
        x = np.geomspace(self.lower, self.upper, grid_size)
        return DistributionGrid(x, self.cdf(x), self.pdf(x))


@dataclass(frozen=True)
class PathLossModel:
    """Distance path loss ``s = d**-exponent`` for users uniform by area.

    Users are placed uniformly in the annulus ``delta <= d <= cell_radius``.
    """

    delta: float = 0.01
    exponent: float = 2.0
    cell_radius: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta < self.cell_radius:
            raise ValueError("need 0 < delta < cell_radius")
        if self.exponent <= 0:
            raise ValueError("path loss exponent must be positive")

    @property
    def lower(self) -> float:
        return self.cell_radius ** (-self.exponent)

    @property
    def upper(self) -> float:
        return self.delta ** (-self.exponent)

    def _area(self) -> float:
        return self.cell_radius**2 - self.delta**2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lower, self.upper)
        out = (self.cell_radius**2 - xc ** (-2.0 / self.exponent)) / self._area()
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lower) & (x <= self.upper)
        xs = np.where(inside, x, 1.0)
        dens = (2.0 / self.exponent) * xs ** (-2.0 / self.exponent - 1.0) / self._area()
        out = np.where(inside, dens, 0.0)
        return out if out.ndim else float(out)

    def inverse_cdf(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("path loss inverse cdf needs 0 <= u <= 1")
        d2 = self.cell_radius**2 - u * self._area()
        out = d2 ** (-self.exponent / 2.0)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.inverse_cdf(rng.random(size))


def fading_cdf(model: FadingModel, x):
    """P(f <= x) for the fading model; ``x`` must be nonnegative."""
    return model.cdf(x)


def fading_inverse_cdf(model: FadingModel, u):
    """Smallest fading value whose cdf reaches ``u``, for ``0 <= u < 1``."""
    return model.inverse_cdf(u)


def path_loss_distribution(model: PathLossModel, grid_size: int = DEFAULT_GRID_SIZE) -> DistributionGrid:
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    x = np.geomspace(model.lower, model.upper, grid_size)
    cdf = model.cdf(x)
    cdf[0], cdf[-1] = 0.0, 1.0
    return DistributionGrid(x, cdf, model.pdf(x))


def product_distribution(a: DistributionGrid, b: DistributionGrid, grid_size: int = DEFAULT_GRID_SIZE,
                         chunk: int = 256) -> DistributionGrid:
    """Distribution of ``X * Y`` for independent ``X ~ a`` and ``Y ~ b``.

    Uses ``P(x) = sum_k m_k P_a(x / s_k)`` over the mass nodes of ``b``.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    s, m = b.masses()
    keep = (m > 0) & (s > 0)
    s, m = s[keep], m[keep]
    lo = max(a.lower, np.finfo(float).tiny) * s.min()
    hi = a.upper * s.max()
    x = np.geomspace(lo, hi, grid_size)
    cdf = np.empty(grid_size)
    pdf = np.empty(grid_size)
    for start in range(0, grid_size, chunk):
        xs = x[start:start + chunk, None] / s[None, :]
        cdf[start:start + chunk] = a.cdf(xs) @ m
        pdf[start:start + chunk] = (a.pdf(xs) / s[None, :]) @ m
    return DistributionGrid(x, np.clip(np.maximum.accumulate(cdf), 0.0, 1.0), pdf)


def kolmogorov_distance(grid: DistributionGrid, other) -> float:
    """Sup-distance between ``grid`` and another grid or a sample array."""
    if isinstance(other, DistributionGrid):
        pts = np.union1d(grid.support, other.support)
        return float(np.max(np.abs(grid.cdf(pts) - other.cdf(pts))))
    xs = np.sort(np.asarray(other, dtype=float))
    n = len(xs)
    F = grid.cdf(xs)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))
