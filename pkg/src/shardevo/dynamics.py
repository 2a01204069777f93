"""Replicator vector field, its Jacobian, and trajectory integration.

The population fraction of chain i evolves as
dx_i/dt = phi_i(x) = x_i * (u_i(x) - ubar(x)); the field sums to zero on the
simplex so trajectories stay on it, and faces (x_i = 0) are invariant.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .ecosystem import EcosystemConfig, SIMPLEX_TOL, as_state, payoff_vector


class NumericalError(RuntimeError):
    """Integration failure (NaN, step underflow)."""


@dataclass(frozen=True)
class IntegratorSpec:
    """How to integrate: fixed-step classic RK4 ("rk4") or adaptive
    Dormand-Prince 5(4) ("rk45"). rate rescales the abstract replicator
    clock. With stop_on_settle, integration ends early once the field stays
    below settle_tol for settle_steps consecutive steps."""

    method: str = "rk4"
    t_end: float = 1000.0
    step: float = 0.01
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 1.0
    renormalize: bool = True
    record_every: int = 1
    rate: float = 1.0
    stop_on_settle: bool = False
    settle_tol: float = 1e-10
    settle_steps: int = 100

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.t_end <= 0 or self.step <= 0 or self.rate <= 0:
            raise ValueError("t_end, step and rate must be positive")
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_step <= 0:
            raise ValueError("tolerances and max_step must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Recorded solution: times[k] maps to states[k] (rows on the simplex)."""

    times: np.ndarray
    states: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if times.ndim != 1 or states.ndim != 2 or times.size != states.shape[0]:
            raise ValueError("times and states must have matching lengths")
        if times.size == 0 or times[0] != 0.0:
            raise ValueError("trajectory must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.allclose(states[0], self.x0, rtol=0, atol=0):
            raise ValueError("states[0] must equal x0")
        if np.max(np.abs(states.sum(axis=1) - 1.0)) > SIMPLEX_TOL:
            raise ValueError("states leave the simplex")

    @property
    def M(self) -> int:
        return self.states.shape[1]

    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ",".join(f"x{i+1}" for i in range(self.M))
        buf.write(f"t,{cols}\n")
        for t, row in zip(self.times, self.states):
            buf.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        header = lines[0].split(",")
        if header[0] != "t" or len(header) < 2:
            raise ValueError("bad trajectory CSV header")
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        data = np.asarray(rows, dtype=float)
        return cls(times=data[:, 0], states=data[:, 1:], x0=data[0, 1:])


def replicator_field(cfg: EcosystemConfig, x) -> np.ndarray:
    """phi(x); components sum to zero on the simplex."""
    x = as_state(x, cfg.M)
    u = payoff_vector(cfg, x)
    return x * (u - x @ u)


def _field_raw(cfg: EcosystemConfig, x: np.ndarray) -> np.ndarray:
    # same formula without simplex validation, for use inside RK stages
    u = cfg.alpha_array / (x + cfg.tau) - cfg.cost.value(x)
    return x * (u - x @ u)


def jacobian(cfg: EcosystemConfig, x) -> np.ndarray:
    """Jacobian d phi_i / d x_j of the replicator field at x.

    diag:     (1-2x_i) u_i - (x_i - x_i^2)(alpha_i/(x_i+tau)^2 + h'(x_i))
              - sum_{j != i} x_j u_j
    off-diag: -x_i u_j + x_i x_j (alpha_j/(x_j+tau)^2 + h'(x_j))
    """
    x = as_state(x, cfg.M)
    a = cfg.alpha_array
    u = payoff_vector(cfg, x)
    w = a / (x + cfg.tau) ** 2 + cfg.cost.derivative(x)
    xu = x * u
    J = np.outer(x, -u + x * w)
    diag = (1.0 - 2.0 * x) * u - (x - x * x) * w - (xu.sum() - xu)
    J[np.diag_indices(cfg.M)] = diag
    return J


def _rk4(cfg, x0, spec):
    n_steps = int(round(spec.t_end / spec.step))
    if n_steps < 1:
        raise ValueError("t_end shorter than one step")
    h = spec.step
    times = [0.0]
    states = [x0.copy()]
    x = x0.copy()
    settled = 0
    for k in range(n_steps):
        f = lambda y: spec.rate * _field_raw(cfg, y)
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if spec.renormalize:
            x[(x < 0) & (x > -1e-12)] = 0.0
            x = x / x.sum()
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state at t={(k + 1) * h:.6g}")
        if (k + 1) % spec.record_every == 0 or k == n_steps - 1:
            times.append((k + 1) * h)
            states.append(x.copy())
        if spec.stop_on_settle:
            if np.max(np.abs(k1)) < spec.settle_tol:
                settled += 1
                if settled >= spec.settle_steps:
                    break
            else:
                settled = 0
    return times, states


# Dormand-Prince 5(4) tableau
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)


def _rk45(cfg, x0, spec):
    f = lambda y: spec.rate * _field_raw(cfg, y)
    t = 0.0
    x = x0.copy()
    h = min(spec.step, spec.max_step, spec.t_end)
    times = [0.0]
    states = [x0.copy()]
    accepted = 0
    k_stages = [None] * 7
    k_stages[0] = f(x)
    while t < spec.t_end:
        h = min(h, spec.t_end - t)
        if h < 1e-14 * max(1.0, t):
            raise NumericalError(f"step underflow at t={t:.6g}")
        for s in range(1, 7):
            y = x.copy()
            for j, a in enumerate(_DP_A[s]):
                y = y + h * a * k_stages[j]
            k_stages[s] = f(y)
        x5 = x + h * sum(b * k for b, k in zip(_DP_B5, k_stages) if b)
        err_vec = h * sum((b5 - b4) * k for b5, b4, k
                          in zip(_DP_B5, _DP_B4, k_stages))
        scale = spec.abs_tol + spec.rel_tol * np.maximum(np.abs(x), np.abs(x5))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if not np.isfinite(err):
            raise NumericalError(f"non-finite error estimate at t={t:.6g}")
        if err <= 1.0:
            t += h
            x = x5
            if spec.renormalize:
                x[(x < 0) & (x > -1e-12)] = 0.0
                x = x / x.sum()
            k_stages[0] = f(x)   # FSAL invalidated by renormalization
            accepted += 1
            if accepted % spec.record_every == 0 or t >= spec.t_end:
                times.append(t)
                states.append(x.copy())
        factor = 0.9 * (1.0 / err) ** 0.2 if err > 0 else 5.0
        h = min(h * min(max(factor, 0.2), 5.0), spec.max_step)
    return times, states


def integrate(cfg: EcosystemConfig, x0, spec: IntegratorSpec) -> Trajectory:
    """Integrate the replicator ODE from x0; deterministic for fixed inputs.

    x0 off the simplex by up to 1e-3 (rounded published states) is
    renormalized on entry.
    """
    x0 = as_state(x0, cfg.M, project=True)
    if spec.method == "rk4":
        times, states = _rk4(cfg, x0, spec)
    else:
        times, states = _rk45(cfg, x0, spec)
    return Trajectory(times=np.asarray(times), states=np.asarray(states), x0=x0)


def payoff_trace(cfg: EcosystemConfig, traj: Trajectory) -> np.ndarray:
    """u_i(x(t)) for every recorded time; shape (len(times), M)."""
    return np.asarray([payoff_vector(cfg, s) for s in traj.states])
