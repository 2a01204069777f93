"""Equilibrium computation per working set.

At an equilibrium with working set W every working chain earns the same
payoff b. Inverting the payoff equation a/(x + tau) - h(x) = b for each
working chain gives its fraction K(a, b); the common payoff is then pinned
by requiring the fractions to sum to one. Both inversions are monotone, so
plain bisection is unconditionally convergent even for tabulated cost
curves.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .ecosystem import EcosystemConfig, WorkingSet, payoff_vector

K_TOL = 1e-12
STRICT_MARGIN = 1e-14
ENUMERATION_CAP = 16


class KDomainError(ValueError):
    """(a, b) outside the domain where a/(x+tau) - h(x) = b has a root in [0, 1]."""


class NoEquilibriumError(ValueError):
    """Working set fails the existence conditions."""


@dataclass(frozen=True)
class ExistenceResult:
    exists: bool
    reason: str | None = None   # "bracket" | "sum" | "boundary" when not exists

    def __bool__(self):
        return self.exists


@dataclass(frozen=True)
class EquilibriumCandidate:
    """Equilibrium of one working set: the state, the common payoff b and the
    residual max payoff spread over the working chains."""

    working_set: WorkingSet
    state: np.ndarray
    common_payoff: float
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float))


def k_domain_bounds(cfg: EcosystemConfig, a: float):
    """Payoff range attainable by a chain with coefficient a: (at x=1, at x=0)."""
    lower = a / (1.0 + cfg.tau) - float(cfg.cost.value(1.0))
    upper = a / cfg.tau
    return lower, upper


def k_function(cfg: EcosystemConfig, a: float, b: float, tol: float = K_TOL) -> float:
    """The unique x in [0, 1] with a/(x + tau) - h(x) = b.

    The map is strictly decreasing in x, so bisection on [0, 1] converges;
    domain boundaries return the exact endpoint values K(a, a/tau) = 0 and
    K(a, a/(1+tau) - h(1)) = 1.
    """
    if a <= 0:
        raise KDomainError("coefficient a must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    lower, upper = k_domain_bounds(cfg, a)
    if b > upper:
        raise KDomainError(f"b={b:.6g} exceeds the x=0 payoff a/tau={upper:.6g}")
    if b < lower:
        raise KDomainError(f"b={b:.6g} below the x=1 payoff {lower:.6g}")
    if b == upper:
        return 0.0
    if b == lower:
        return 1.0
    g = lambda x: a / (x + cfg.tau) - float(cfg.cost.value(x)) - b
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def existence_check(cfg: EcosystemConfig, W: WorkingSet) -> ExistenceResult:
    """Whether the working set admits a (then unique) equilibrium.

    Requires alpha_first/(1+tau) - h(1) < alpha_last/tau and the fractions
    of all but the last chain, at the last chain's extinction payoff, to sum
    below 1. Strictness is enforced with a small margin; boundary-equality
    instances are reported as failures rather than guessed.
    """
    idx = W.indices
    if idx[-1] > cfg.M:
        raise IndexError(f"working set references chain {idx[-1]} > M={cfg.M}")
    a = cfg.alpha_array
    a_first, a_last = a[idx[0] - 1], a[idx[-1] - 1]
    lower, _ = k_domain_bounds(cfg, a_first)
    gap = a_last / cfg.tau - lower
    if gap <= STRICT_MARGIN:
        reason = "boundary" if gap > -STRICT_MARGIN else "bracket"
        return ExistenceResult(False, reason)
    s = sum(k_function(cfg, a[j - 1], a_last / cfg.tau) for j in idx[:-1])
    if s >= 1.0 - STRICT_MARGIN:
        return ExistenceResult(False, "boundary" if s < 1.0 + STRICT_MARGIN else "sum")
    return ExistenceResult(True)


def k_batch(cfg: EcosystemConfig, a, b, tol: float = 1e-14) -> np.ndarray:
    """Vectorized K: element-wise bisection of a/(x+tau) - h(x) = b.

    Values of b at or beyond the domain boundaries clamp to the endpoint
    identities K(a, a/tau) = 0 and K(a, a/(1+tau) - h(1)) = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    h1 = float(cfg.cost.value(1.0))
    upper = a / cfg.tau
    lower = a / (1.0 + cfg.tau) - h1
    lo = np.zeros(a.shape)
    hi = np.ones(a.shape)
    iters = max(int(np.ceil(np.log2(1.0 / tol))), 1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = a / (mid + cfg.tau) - cfg.cost.value(mid) - b > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    x = 0.5 * (lo + hi)
    x = np.where(b >= upper, 0.0, x)
    x = np.where(b <= lower, 1.0, x)
    return x


def _solve_working_sets(cfg: EcosystemConfig, subsets, tol: float):
    """Lockstep outer bisection on the common payoff for many working sets.

    Each subset's S(b) = sum_j K(alpha_j, b) is evaluated with one batched
    inner bisection over all (subset, member) pairs per outer step.
    """
    a = cfg.alpha_array
    h1 = float(cfg.cost.value(1.0))
    nsub = len(subsets)
    seg = np.concatenate([np.full(len(s), k) for k, s in enumerate(subsets)])
    mem = np.concatenate([np.asarray(s, dtype=int) - 1 for s in subsets])
    mem_alpha = a[mem]
    lo = np.array([a[s[0] - 1] / (1.0 + cfg.tau) - h1 for s in subsets])
    hi = np.array([a[s[-1] - 1] / cfg.tau for s in subsets])
    b = 0.5 * (lo + hi)
    inner_tol = min(tol * 1e-2, 1e-14)
    done = np.zeros(nsub, dtype=bool)
    # per-pair root bounds, refreshed at the outer bracket endpoints: the
    # root x is decreasing in b, so the roots at [lo, hi] bracket the root at
    # any b in between and each inner bisection can start from a bracket that
    # shrinks with the outer one instead of from [0, 1]
    x_at_hi = np.zeros(mem.size)
    x_at_lo = np.ones(mem.size)
    x = None
    for _ in range(200):
        b = np.where(done, b, 0.5 * (lo + hi))
        bb = b[seg]
        xl = x_at_hi.copy()
        xh = x_at_lo.copy()
        width = float(np.max(xh - xl))
        iters = max(int(np.ceil(np.log2(max(width, inner_tol) / inner_tol))), 1)
        for _ in range(iters):
            mid = 0.5 * (xl + xh)
            pos = mem_alpha / (mid + cfg.tau) - cfg.cost.value(mid) - bb > 0.0
            xl = np.where(pos, mid, xl)
            xh = np.where(pos, xh, mid)
        x = 0.5 * (xl + xh)
        S = np.bincount(seg, weights=x, minlength=nsub)
        done |= np.abs(S - 1.0) < tol
        done |= (hi - lo) < 1e-16 * np.maximum(1.0, np.abs(b))
        if done.all():
            break
        above = S > 1.0
        upd = ~done
        lo = np.where(upd & above, b, lo)
        hi = np.where(upd & ~above, b, hi)
        # b became the new lower endpoint where S > 1, so its root (safe
        # upper estimate xh) is the new upper x bound, and vice versa
        x_at_lo = np.where((upd & above)[seg], xh, x_at_lo)
        x_at_hi = np.where((upd & ~above)[seg], xl, x_at_hi)

    out = []
    for k, s in enumerate(subsets):
        xs = np.zeros(cfg.M)
        xs[np.asarray(s, dtype=int) - 1] = x[seg == k]
        xs[xs < 1e-12] = 0.0
        gap = 1.0 - xs.sum()
        if abs(gap) > 10 * tol:
            raise NoEquilibriumError(f"solver left sum error {gap:.3g} for {s}")
        xs[np.argmax(xs)] += gap
        u = payoff_vector(cfg, xs)
        uW = u[np.asarray(s, dtype=int) - 1]
        out.append(EquilibriumCandidate(
            working_set=WorkingSet(tuple(s)), state=xs,
            common_payoff=float(b[k]),
            residual=float(uW.max() - uW.min())))
    return out


def solve_equilibrium(cfg: EcosystemConfig, W: WorkingSet,
                      tol: float = K_TOL) -> EquilibriumCandidate:
    """Equilibrium of working set W via outer bisection on the common payoff.

    S(b) = sum_j K(alpha_j, b) over W is strictly decreasing; the root of
    S(b) = 1 is bracketed between the first chain's x=1 payoff (S > 1) and
    the last chain's x=0 payoff (S < 1). State components below 1e-12 snap
    to exact zero; any leftover sum error below tol is folded into the
    largest component.
    """
    res = existence_check(cfg, W)
    if not res:
        raise NoEquilibriumError(f"working set {W.indices} has no equilibrium "
                                 f"({res.reason})")
    return _solve_working_sets(cfg, [W.indices], tol)[0]


def _existence_mask(cfg: EcosystemConfig, subsets):
    """Vectorized existence test (same conditions as existence_check)."""
    a = cfg.alpha_array
    h1 = float(cfg.cost.value(1.0))
    # table[j, w] = K(alpha_j, alpha_w / tau)
    aj, aw = np.meshgrid(a, a, indexing="ij")
    table = k_batch(cfg, aj, aw / cfg.tau)
    ok = []
    for s in subsets:
        first, last = s[0] - 1, s[-1] - 1
        gap = a[last] / cfg.tau - (a[first] / (1.0 + cfg.tau) - h1)
        if gap <= STRICT_MARGIN:
            ok.append(False)
            continue
        total = sum(table[j - 1, last] for j in s[:-1])
        ok.append(total < 1.0 - STRICT_MARGIN)
    return ok


def enumerate_equilibria(cfg: EcosystemConfig, tol: float = K_TOL,
                         cap: int = ENUMERATION_CAP):
    """Solve every non-empty working set that passes the existence check.

    All 2^M - 1 subsets are tried, so M is capped; beyond the cap, prefix
    sets up to w_star are the only ones worth solving anyway. Existence
    screening and the solves are batched across subsets.
    """
    if cfg.M > cap:
        raise ValueError(f"M={cfg.M} exceeds enumeration cap {cap}; "
                         "use w_star and prefix working sets instead")
    subsets = [tuple(i + 1 for i in range(cfg.M) if mask >> i & 1)
               for mask in range(1, 2 ** cfg.M)]
    passing = [s for s, ok in zip(subsets, _existence_mask(cfg, subsets)) if ok]
    if not passing:
        return []
    return _solve_working_sets(cfg, passing, tol)


def w_star(cfg: EcosystemConfig) -> int:
    """Largest w such that the prefix working set {1..w} admits an equilibrium.

    Only this prefix set can carry an asymptotically stable equilibrium;
    w = 1 always qualifies.
    """
    for w in range(cfg.M, 1, -1):
        if existence_check(cfg, WorkingSet(tuple(range(1, w + 1)))):
            return w
    return 1


def candidates_to_csv(candidates, M: int) -> str:
    buf = io.StringIO()
    cols = ",".join(f"x{i+1}" for i in range(M))
    buf.write(f"working_set,b_bar,{cols},residual\n")
    for c in candidates:
        ws = "|".join(str(i) for i in c.working_set)
        xs = ",".join(f"{v:.17g}" for v in c.state)
        buf.write(f"{ws},{c.common_payoff:.17g},{xs},{c.residual:.17g}\n")
    return buf.getvalue()
