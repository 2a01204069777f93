"""Finite-population imitation dynamics, the stochastic twin of the ODE.

N well-mixed agents each hold one chain. Revision events arrive at
aggregate rate N * revision_rate; at an event a uniformly random agent
samples a uniformly random peer and copies the peer's chain with
probability max(0, u_peer - u_own) / imitation_scale (pairwise
proportional imitation). The expected motion of the empirical fractions is
exactly the replicator field times revision_rate / imitation_scale, so
ODE time t corresponds to simulated time t / time_scale.

The run is simulated as the embedded jump chain: the state only changes at
a switch, the number of events between switches is geometric and their
total duration is gamma-distributed, which is distributionally exact and
far cheaper than ticking every event.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .ecosystem import EcosystemConfig, as_state


class ScaleError(ValueError):
    """imitation_scale smaller than an observed payoff difference."""


@dataclass(frozen=True)
class AgentSimSpec:
    N: int
    horizon: float
    seed: int
    revision_rate: float = 1.0
    sample_every: float = 0.1
    imitation_scale: float = 10.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need at least two agents")
        if self.horizon <= 0 or self.revision_rate <= 0 or self.sample_every <= 0:
            raise ValueError("horizon, revision_rate, sample_every must be positive")
        if self.imitation_scale <= 0:
            raise ValueError("imitation_scale must be positive")

    @property
    def time_scale(self) -> float:
        """ODE time units per simulated time unit."""
        return self.revision_rate / self.imitation_scale


@dataclass(frozen=True)
class EmpiricalTrajectory:
    """Sampled empirical fractions and integer counts; counts sum to N."""

    times: np.ndarray
    states: np.ndarray
    counts: np.ndarray
    N: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))
        if np.any(self.counts.sum(axis=1) != self.N):
            raise ValueError("counts must sum to N at every sample")

    @property
    def M(self) -> int:
        return self.states.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.seed} N={self.N}\n")
        xcols = ",".join(f"x{i+1}" for i in range(self.M))
        ncols = ",".join(f"n{i+1}" for i in range(self.M))
        buf.write(f"t,{xcols},{ncols}\n")
        for t, row, cnt in zip(self.times, self.states, self.counts):
            buf.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + ","
                      + ",".join(str(int(v)) for v in cnt) + "\n")
        return buf.getvalue()


def counts_from_fractions(x, N: int) -> np.ndarray:
    """Largest-remainder rounding of N*x to integer counts summing to N."""
    x = np.asarray(x, dtype=float)
    raw = N * x
    base = np.floor(raw).astype(np.int64)
    short = N - int(base.sum())
    if short:
        order = np.argsort(-(raw - base))
        base[order[:short]] += 1
    return base


def simulate_agents(cfg: EcosystemConfig, x0, spec: AgentSimSpec) -> EmpiricalTrajectory:
    """Run the imitation process from x0; deterministic for a fixed seed."""
    x0 = as_state(x0, cfg.M, project=True)
    rng = np.random.default_rng(np.uint64(spec.seed))
    counts = counts_from_fractions(x0, spec.N)
    N = spec.N
    M = cfg.M
    alpha = cfg.alpha_array
    tau = cfg.tau
    event_rate = N * spec.revision_rate
    scale = spec.imitation_scale

    sample_times = np.arange(0.0, spec.horizon + 0.5 * spec.sample_every,
                             spec.sample_every)
    rec_counts = np.zeros((sample_times.size, M), dtype=np.int64)
    next_sample = 0

    def payoffs(frac):
        return alpha / (frac + tau) - cfg.cost.value(frac)

    t = 0.0
    frac = counts / N
    u = payoffs(frac)
    while next_sample < sample_times.size:
        # switch propensities: event picks (i, j) with prob x_i x_j, accepts
        # with (u_j - u_i)+ / scale
        live = frac > 0
        du = np.subtract.outer(u, u)   # du[i, j] = u_i - u_j
        gain = np.maximum(-du, 0.0)    # payoff of j over i
        if np.any(gain[np.ix_(live, live)] > scale):
            worst = gain[np.ix_(live, live)].max()
            raise ScaleError(f"imitation_scale {scale} < payoff gap {worst:.6g}")
        prob = np.outer(frac, frac) * gain / scale
        np.fill_diagonal(prob, 0.0)
        p_switch = prob.sum()
        if p_switch <= 0.0:
            # absorbing: no pair with positive gain remains
            while next_sample < sample_times.size:
                rec_counts[next_sample] = counts
                next_sample += 1
            break
        # geometric number of events up to and including the switch
        k = rng.geometric(p_switch)
        dt = rng.standard_gamma(k) / event_rate
        t_next = t + dt
        while (next_sample < sample_times.size
               and sample_times[next_sample] < t_next):
            rec_counts[next_sample] = counts
            next_sample += 1
        if next_sample >= sample_times.size:
            break
        flat = prob.ravel() / p_switch
        pick = rng.choice(M * M, p=flat)
        i, j = divmod(pick, M)
        counts[i] -= 1
        counts[j] += 1
        t = t_next
        frac = counts / N
        u = payoffs(frac)

    states = rec_counts / N
    return EmpiricalTrajectory(times=sample_times, states=states,
                               counts=rec_counts, N=N, seed=spec.seed)


@dataclass(frozen=True)
class DeviationReport:
    """Per-time and sup-norm deviation between an empirical run and the ODE,
    compared on the ODE clock."""

    times: np.ndarray             # ODE-clock times at the empirical samples
    deviations: np.ndarray        # max_i |x_emp_i - x_ode_i| per sample
    sup_norm: float


def compare_to_ode(emp: EmpiricalTrajectory, ode: Trajectory,
                   time_scale: float) -> DeviationReport:
    """Deviation of the empirical fractions from the ODE solution.

    Empirical sample times are mapped onto the ODE clock by time_scale
    (= revision_rate / imitation_scale) and the ODE states are linearly
    interpolated there; both inputs must cover the compared horizon.
    """
    if emp.M != ode.M:
        raise ValueError("trajectories have different numbers of chains")
    ode_times = np.asarray(emp.times) * time_scale
    if ode_times[-1] > ode.times[-1] * (1 + 1e-12):
        raise ValueError("ODE trajectory does not cover the empirical horizon")
    interp = np.column_stack([
        np.interp(ode_times, ode.times, ode.states[:, i]) for i in range(ode.M)])
    dev = np.max(np.abs(emp.states - interp), axis=1)
    return DeviationReport(times=ode_times, deviations=dev,
                           sup_norm=float(dev.max()))
