"""Game instance definition and per-chain payoff evaluation.

A game instance is a set of M blockchains competing for a population of
consensus processors. Chain i pays alpha_i / (x_i + tau) - h(x_i) per unit
time to each of its processors, where x_i is the fraction of the population
working on chain i, tau is the operator share and h is the congestion cost
curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-9
DEFAULT_ZERO_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid game configuration."""


class StateError(ValueError):
    """State vector off the population simplex."""


@dataclass(frozen=True)
class CostCurve:
    """Congestion cost h(x) on [0, 1], monotone non-decreasing with h(0) = 0.

    kind is one of "log1p" (h(x) = ln(1+x)) or "tabulated" (piecewise-linear
    interpolation of sorted sample pairs). Curves derived from protocol-level
    parameters are materialized as tabulated curves.
    """

    kind: str
    xs: tuple = field(default=())
    hs: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("log1p", "tabulated"):
            raise ConfigError(f"unknown cost curve kind {self.kind!r}")
        if self.kind == "tabulated":
            xs = np.asarray(self.xs, dtype=float)
            hs = np.asarray(self.hs, dtype=float)
            if xs.size < 2 or xs.size != hs.size:
                raise ConfigError("tabulated curve needs >= 2 (x, h) pairs")
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("tabulated knots must be strictly increasing")
            if xs[0] != 0.0 or xs[-1] < 1.0:
                raise ConfigError("tabulated knots must start at 0 and cover [0, 1]")

    @classmethod
    def log1p(cls) -> "CostCurve":
        return cls(kind="log1p")

    @classmethod
    def tabulated(cls, xs, hs) -> "CostCurve":
        return cls(kind="tabulated", xs=tuple(float(v) for v in xs),
                   hs=tuple(float(v) for v in hs))

    def value(self, x):
        """h(x); accepts scalars or arrays."""
        if self.kind == "log1p":
            return np.log1p(x)
        return np.interp(x, self.xs, self.hs)

    def derivative(self, x):
        """dh/dx; piecewise slope (right-continuous at knots) for tabulated curves."""
        if self.kind == "log1p":
            return 1.0 / (1.0 + np.asarray(x, dtype=float))
        xs = np.asarray(self.xs)
        hs = np.asarray(self.hs)
        slopes = np.diff(hs) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    def check_monotone(self, grid_points: int = 1024):
        """Validate h(0) = 0 and monotonicity by dense sampling; raises ConfigError."""
        if abs(float(self.value(0.0))) > 0.0:
            raise ConfigError("cost curve must satisfy h(0) = 0")
        grid = np.linspace(0.0, 1.0, grid_points)
        vals = np.asarray(self.value(grid), dtype=float)
        if np.any(np.diff(vals) < -1e-15):
            raise ConfigError("cost curve is not monotone non-decreasing on [0, 1]")


@dataclass(frozen=True)
class EcosystemConfig:
    """A game instance: payoff coefficients alpha (descending), operator share
    tau and the cost curve. Chains are indexed 1..M in descending alpha order;
    the constructor rejects unsorted input rather than permuting silently.
    """

    alpha: tuple
    tau: float
    cost: CostCurve = field(default_factory=CostCurve.log1p)
    monotone_grid: int = 1024

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "tau", float(self.tau))
        if len(alpha) < 1:
            raise ConfigError("need at least one chain")
        if any(a <= 0 for a in alpha):
            raise ConfigError("all alpha_i must be positive")
        if any(alpha[i] < alpha[i + 1] for i in range(len(alpha) - 1)):
            raise ConfigError("alpha must be sorted non-increasing")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        self.cost.check_monotone(self.monotone_grid)

    @property
    def M(self) -> int:
        return len(self.alpha)

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)


@dataclass(frozen=True)
class WorkingSet:
    """The chains with strictly positive population fraction (1-based indices)."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise ValueError("working set must be non-empty")
        if any(i < 1 for i in idx):
            raise ValueError("chain indices are 1-based")
        if any(idx[k] >= idx[k + 1] for k in range(len(idx) - 1)):
            raise ValueError("indices must be strictly increasing")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in self.indices

    def resting(self, M: int) -> tuple:
        """Complement set: chains with zero fraction."""
        return tuple(i for i in range(1, M + 1) if i not in self.indices)

    def is_prefix(self) -> bool:
        return self.indices == tuple(range(1, len(self.indices) + 1))


def as_state(x, M: int | None = None, project: bool = False) -> np.ndarray:
    """Validate and return a point on the (M-1)-simplex as a float array.

    Components within 1e-12 below zero are snapped to exact 0 (integrator
    drift); larger violations raise StateError. With project=True, a sum
    off by up to 1e-3 is renormalized instead of rejected — published
    states rounded to 4 decimals need this slack.
    """
    x = np.asarray(x, dtype=float).copy()
    if x.ndim != 1:
        raise StateError("state must be a 1-d vector")
    if M is not None and x.size != M:
        raise StateError(f"state has {x.size} components, expected {M}")
    if np.any(x < -DEFAULT_ZERO_TOL) or np.any(x > 1.0 + 1e-3):
        raise StateError("state components must lie in [0, 1]")
    x[x < 0.0] = 0.0
    gap = abs(x.sum() - 1.0)
    if gap > SIMPLEX_TOL:
        if not (project and gap <= 1e-3):
            raise StateError(f"state components sum to {x.sum():.12g}, not 1")
        x = x / x.sum()
    return x


def payoff_vector(cfg: EcosystemConfig, x) -> np.ndarray:
    """Per-chain payoffs u_i(x) = alpha_i/(x_i + tau) - h(x_i) for all chains."""
    x = as_state(x, cfg.M)
    return cfg.alpha_array / (x + cfg.tau) - cfg.cost.value(x)


def payoff(cfg: EcosystemConfig, x, i: int) -> float:
    """Payoff of chain i (1-based) at state x."""
    if not 1 <= i <= cfg.M:
        raise IndexError(f"chain index {i} out of range 1..{cfg.M}")
    return float(payoff_vector(cfg, x)[i - 1])


def mean_payoff(cfg: EcosystemConfig, x) -> float:
    """Population-average payoff sum_i x_i u_i(x)."""
    x = as_state(x, cfg.M)
    return float(x @ payoff_vector(cfg, x))


def working_set_of(x, zero_tol: float = DEFAULT_ZERO_TOL) -> WorkingSet:
    """Chains with fraction above zero_tol, as 1-based indices."""
    x = np.asarray(x, dtype=float)
    idx = tuple(int(i) + 1 for i in np.nonzero(x > zero_tol)[0])
    if not idx:
        raise StateError("all components below zero tolerance")
    return WorkingSet(idx)
