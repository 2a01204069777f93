"""Epoch-time, reward and cost model for PoW-sharded consensus.

Committee formation assigns each processor to one of m = 2^s committees by
the low bits of its PoW solution; a full committee forces another puzzle, so
the total solution count is an extended coupon-collector (double dixie cup)
quantity: draws until every one of m bins holds at least c balls. f(n) is
that expectation divided by the processor count n. An epoch then lasts
T*f(n) + g(c) seconds, pays mu*r*(T*f(n)+g(c))/n per processor and costs
sigma*f(n) per processor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ecosystem import ConfigError, CostCurve, EcosystemConfig

DEFAULT_H_GRID = 257


@dataclass(frozen=True)
class GModel:
    """Consensus-time model g(c). "quadratic": a + b*c^2 (PBFT message
    complexity); "constant": fixed seconds regardless of committee size."""

    kind: str = "quadratic"
    a: float = 103.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "constant"):
            raise ConfigError(f"unknown g model {self.kind!r}")

    def value(self, c: int) -> float:
        if self.kind == "constant":
            return float(self.a)
        return float(self.a + self.b * c * c)


@dataclass(frozen=True)
class ElasticoParams:
    """Protocol-level parameters for one blockchain network."""

    n: int                  # total processors
    c: int                  # committee size
    s: int                  # 2^s committees
    T: float                # seconds per PoW solution
    sigma_cost: float       # currency per PoW solution
    mu: float               # transactions per second
    r: float                # currency per transaction
    tau_tilde: float        # operator share, effective processors
    g_model: GModel = field(default_factory=GModel)

    def __post_init__(self):
        if self.n < 1 or self.c < 1 or self.s < 0:
            raise ConfigError("n, c must be >= 1 and s >= 0")
        if self.T < 0 or self.sigma_cost < 0 or self.mu < 0 or self.r < 0:
            raise ConfigError("T, sigma, mu, r must be non-negative")
        if self.tau_tilde <= 0:
            raise ConfigError("tau_tilde must be positive")

    @property
    def committees(self) -> int:
        return 2 ** self.s

    def check_partition(self):
        """n = 2^s * c when a full partition is required (strict mode)."""
        if self.n != self.committees * self.c:
            raise ConfigError(
                f"n={self.n} does not equal 2^s*c={self.committees * self.c}")


EULER_GAMMA = 0.5772156649015328606


def harmonic(m: float) -> float:
    """H_m, extended to real m via the digamma function."""
    if m < 0:
        raise ValueError("harmonic number needs m >= 0")
    if m == 0:
        return 0.0
    if float(m).is_integer() and m <= 10_000:
        return sum(1.0 / k for k in range(1, int(m) + 1))
    return _digamma(m + 1.0) + EULER_GAMMA


def _digamma(x: float) -> float:
    """psi(x) for x > 0 by recurrence + asymptotic series."""
    result = 0.0
    while x < 6.0:
        result -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    return result + math.log(x) - 0.5 / x - inv2 * (
        1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 / 240)))


def coupon_draws_monte_carlo(m: int, c: int, trials: int, seed: int,
                             chunk: int = 200_000):
    """Expected draws until each of m bins holds >= c balls, by simulation.

    Returns (mean, standard_error) over `trials` independent runs. Trials are
    simulated in vectorized rounds, one draw per unfinished trial per round;
    identical seed gives identical results.
    """
    if m < 1 or c < 1:
        raise ValueError("m and c must be >= 1")
    if trials < 1:
        raise ValueError("need at least one Monte Carlo trial")
    rng = np.random.default_rng(np.uint64(seed))
    total = 0.0
    total_sq = 0.0
    done_trials = 0
    while done_trials < trials:
        batch = min(chunk, trials - done_trials)
        counts = np.zeros((batch, m), dtype=np.int32)
        need = np.full(batch, m, dtype=np.int32)   # bins still below c
        draws = np.zeros(batch, dtype=np.int64)
        active = np.arange(batch)
        while active.size:
            hit = rng.integers(0, m, size=active.size)
            rows = active
            counts[rows, hit] += 1
            draws[rows] += 1
            filled = counts[rows, hit] == c
            if filled.any():
                need[rows[filled]] -= 1
                active = rows[need[rows] > 0]
        d = draws.astype(float)
        total += d.sum()
        total_sq += (d * d).sum()
        done_trials += batch
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    se = math.sqrt(var / trials)
    return mean, se


def coupon_draws_asymptotic(m: float, c: int) -> float:
    """Newman-Shepp expectation of total draws: m*H_m for c = 1, otherwise
    m*(ln m + (c-1) ln ln m). Continuous in m; small m (< 2) is bridged
    linearly from the origin since ln ln m blows up there."""
    if m <= 0:
        return 0.0
    if c == 1:
        return m * harmonic(m)
    if m < 2.0:
        return (m / 2.0) * coupon_draws_asymptotic(2.0, c)
    return m * (math.log(m) + (c - 1) * math.log(math.log(m)))


def expected_puzzles_per_processor(m, c: int, n: float, method: str = "asymptotic",
                                   trials: int = 100_000, seed: int = 0):
    """f(n): expected PoW solutions per processor to fill m committees of
    size c with n processors drawing uniformly.

    method "asymptotic" returns a float; "monte-carlo" returns
    (mean, standard_error) with the error divided through by n as well.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if method == "asymptotic":
        return coupon_draws_asymptotic(m, c) / n
    if method == "monte-carlo":
        mean, se = coupon_draws_monte_carlo(int(m), c, trials, seed)
        return mean / n, se / n
    raise ValueError(f"unknown method {method!r}")


def puzzles_fraction_curve(p: ElasticoParams, N: float, x) -> np.ndarray:
    """f(N*x) treated as a continuous function of the population fraction x.

    The committee count scales with the allocated processors (m = n/c), so
    f(n) = E[draws](n/c, c)/n; below n = 2c the curve is linear from
    f(0) = 0 to the m = 2 anchor.
    """
    x = np.asarray(x, dtype=float)
    n = N * x
    out = np.zeros_like(n)
    anchor_n = 2.0 * p.c
    # below the m = 2 anchor, bridge f linearly to 0 so that f is continuous,
    # increasing and f(0) = 0; above it, Newman-Shepp with m = n/c
    anchor_f = coupon_draws_asymptotic(2.0, p.c) / anchor_n
    small = (n > 0) & (n <= anchor_n)
    out[small] = anchor_f * n[small] / anchor_n
    big = n > anchor_n
    if np.any(big):
        out[big] = np.array([coupon_draws_asymptotic(v / p.c, p.c) / v
                             for v in n[big]])
    return out


def epoch_time(p: ElasticoParams, method: str = "asymptotic",
               trials: int = 100_000, seed: int = 0) -> float:
    """Average epoch duration T*f(n) + g(c), in seconds."""
    f = expected_puzzles_per_processor(p.committees, p.c, p.n, method, trials, seed)
    if method == "monte-carlo":
        f = f[0]
    return p.T * f + p.g_model.value(p.c)


def epoch_reward(p: ElasticoParams, **kwargs) -> float:
    """Average per-processor reward per epoch: mu*r*epoch_time/n."""
    return p.mu * p.r * epoch_time(p, **kwargs) / p.n


def epoch_cost(p: ElasticoParams, method: str = "asymptotic",
               trials: int = 100_000, seed: int = 0) -> float:
    """Average per-processor cost per epoch: sigma * f(n)."""
    f = expected_puzzles_per_processor(p.committees, p.c, p.n, method, trials, seed)
    if method == "monte-carlo":
        f = f[0]
    return p.sigma_cost * f


@dataclass(frozen=True)
class DerivedGame:
    """Game inputs derived from protocol parameters, with the permutation
    mapping game chain index (descending alpha) back to the input order."""

    config: EcosystemConfig
    order: tuple  # order[i] = position in the input list of game chain i+1


def derive_game_inputs(chains, N: float, strict: bool = True,
                       grid_points: int = DEFAULT_H_GRID) -> DerivedGame:
    """Build an EcosystemConfig from per-chain protocol parameters.

    alpha_i = mu_i r_i / N, tau = tau_tilde / N, and the cost curve is
    h(x) = sigma*f(Nx) / (T*f(Nx) + g(c)) sampled on a uniform grid and
    interpolated piecewise-linearly. All chains must share T, c, sigma and
    tau_tilde; in strict mode mismatches (and broken n = 2^s*c partitions)
    raise, otherwise they warn.
    """
    chains = list(chains)
    if not chains or N <= 0:
        raise ConfigError("need at least one chain and N > 0")
    ref = chains[0]
    for p in chains:
        same = (p.T == ref.T and p.c == ref.c and p.sigma_cost == ref.sigma_cost
                and p.tau_tilde == ref.tau_tilde)
        if not same:
            if strict:
                raise ConfigError("chains must share T, c, sigma and tau_tilde")
            warnings.warn("chains disagree on shared protocol parameters; "
                          "using the first chain's values")
        if p.n != p.committees * p.c:
            msg = f"n={p.n} does not match 2^s*c={p.committees * p.c}"
            if strict:
                raise ConfigError(msg)
            warnings.warn(msg + " (f treated as continuous)")

    pairs = sorted(((p.mu * p.r / N, k) for k, p in enumerate(chains)),
                   key=lambda t: (-t[0], t[1]))
    alpha = tuple(a for a, _ in pairs)
    order = tuple(k for _, k in pairs)

    xs = np.linspace(0.0, 1.0, grid_points)
    f = puzzles_fraction_curve(ref, N, xs)
    g = ref.g_model.value(ref.c)
    denom = ref.T * f + g
    hs = np.where(f > 0, ref.sigma_cost * f / denom, 0.0)
    hs[0] = 0.0
    cost = CostCurve.tabulated(xs, hs)
    cfg = EcosystemConfig(alpha=alpha, tau=ref.tau_tilde / N, cost=cost)
    return DerivedGame(config=cfg, order=order)
