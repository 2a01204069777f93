"""Equilibrium classification via Jacobian eigenvalues.

A resting chain k contributes an analytically known eigenvalue
lambda_k = alpha_k / tau - b (b the common payoff of the working chains),
because row k of the Jacobian vanishes off the diagonal at the equilibrium.
Any lambda_k > 0 settles instability without an eigensolve; otherwise the
full spectrum decides. The dense eigensolver is self-contained: balancing,
Householder reduction to Hessenberg form, then Francis double-shift QR.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import jacobian
from .ecosystem import EcosystemConfig
from .equilibrium import (EquilibriumCandidate, enumerate_equilibria, w_star)

EPS_STAB = 1e-9


class EigenConvergenceError(RuntimeError):
    """QR iteration hit the cap; .partial carries eigenvalues found so far."""

    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


class Classification(str, Enum):
    STABLE = "asymptotically-stable"
    UNSTABLE = "unstable"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class StabilityVerdict:
    classification: Classification
    eigenvalues: tuple            # numerical spectrum; empty on the fast path
    analytic_resting_eigenvalues: tuple   # (chain index k, lambda_k) pairs
    margin: float                 # max real part backing the verdict


def _hqr_impl(a, its_cap):
    """Balance + elimination Hessenberg + Francis double-shift QR.

    Classic dense real eigensolver, written with explicit loops so it can be
    JIT-compiled. Mutates its input; returns (wr, wi, failed_block) where
    failed_block < 0 on success and otherwise marks the block that failed to
    deflate within its_cap sweeps.
    """
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    eps = 2.220446049250313e-16

    # balance: iterate radix-2 row/column norm equalization
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            r = 0.0
            c = 0.0
            for j in range(n):
                if j != i:
                    c += abs(a[j, i])
                    r += abs(a[i, j])
            if c != 0.0 and r != 0.0:
                g = r / radix
                f = 1.0
                s = c + r
                while c < g:
                    f *= radix
                    c *= sqrdx
                g = r * radix
                while c > g:
                    f /= radix
                    c /= sqrdx
                if (c + r) / f < 0.95 * s:
                    done = False
                    g = 1.0 / f
                    for j in range(n):
                        a[i, j] *= g
                    for j in range(n):
                        a[j, i] *= f
    # Hessenberg by stabilized elementary transforms; the multipliers left
    # below the subdiagonal are never read by the QR sweeps
    for m in range(1, n - 1):
        x = 0.0
        i = m
        for j in range(m, n):
            if abs(a[j, m - 1]) > abs(x):
                x = a[j, m - 1]
                i = j
        if i != m:
            for j in range(m - 1, n):
                a[i, j], a[m, j] = a[m, j], a[i, j]
            for j in range(n):
                a[j, i], a[j, m] = a[j, m], a[j, i]
        if x != 0.0:
            for i in range(m + 1, n):
                y = a[i, m - 1]
                if y != 0.0:
                    y /= x
                    a[i, m - 1] = y
                    for j in range(m, n):
                        a[i, j] -= y * a[m, j]
                    for j in range(n):
                        a[j, m] += y * a[j, i]
    # Francis double-shift QR with deflation from the bottom
    anorm = 0.0
    for i in range(n):
        for j in range(max(i - 1, 0), n):
            anorm += abs(a[i, j])
    if anorm == 0.0:
        return wr, wi, -1
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= eps * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:                      # 1x1 block deflates
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:                  # 2x2 block deflates
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + (z if p >= 0.0 else -z)
                    wr[nn - 1] = x + z
                    wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = 0.0
                    wi[nn] = 0.0
                else:
                    wr[nn - 1] = x + p
                    wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its == its_cap:
                return wr, wi, nn
            if its != 0 and its % 10 == 0:   # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                y = 0.75 * s
                x = y
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z)
                              + abs(a[m + 1, m + 1]))
                if u <= eps * v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):           # chase the bulge
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = 0.0
                    if k != nn - 1:
                        r = a[k + 2, k - 1]
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.sqrt(p * p + q * q + r * r)
                if p < 0.0:
                    s = -s
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k, j] + q * a[k + 1, j]
                        if k != nn - 1:
                            p += r * a[k + 2, j]
                            a[k + 2, j] -= p * z
                        a[k + 1, j] -= p * y
                        a[k, j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i, k] + y * a[i, k + 1]
                        if k != nn - 1:
                            p += z * a[i, k + 2]
                            a[i, k + 2] -= p * r
                        a[i, k + 1] -= p * q
                        a[i, k] -= p
    return wr, wi, -1


try:
    from numba import njit as _njit

    _hqr = _njit(cache=True)(_hqr_impl)
except ImportError:                           # pragma: no cover
    _hqr = _hqr_impl


def eigenvalues(A, max_sweeps_per_eig: int = 100) -> np.ndarray:
    """All eigenvalues (with multiplicity) of a square real matrix.

    Balancing, Hessenberg reduction and Francis implicit double-shift QR
    with deflation; exceptional ad-hoc shifts break rare cycles. Raises
    EigenConvergenceError with partial results if the iteration cap trips.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    if n == 1:
        return A.astype(complex).reshape(1)
    wr, wi, failed = _hqr(A.copy(), max_sweeps_per_eig * n)
    if failed >= 0:
        raise EigenConvergenceError(
            f"QR iteration failed to deflate block ending at {failed}",
            wr[failed + 1:] + 1j * wi[failed + 1:])
    return wr + 1j * wi


def resting_eigenvalue(cfg: EcosystemConfig, candidate: EquilibriumCandidate,
                       k: int) -> float:
    """Analytic Jacobian eigenvalue of resting chain k: alpha_k/tau - b."""
    if k in candidate.working_set:
        raise ValueError(f"chain {k} is in the working set")
    if not 1 <= k <= cfg.M:
        raise IndexError(f"chain index {k} out of range 1..{cfg.M}")
    return cfg.alpha[k - 1] / cfg.tau - candidate.common_payoff


def classify(cfg: EcosystemConfig, candidate: EquilibriumCandidate,
             eps_stab: float = EPS_STAB) -> StabilityVerdict:
    """Classify an equilibrium by the Jacobian spectrum at its state.

    Fast path: a positive resting eigenvalue proves instability without an
    eigensolve. Otherwise the full spectrum decides, with an Inconclusive
    dead band of width eps_stab around zero.
    """
    resting = tuple((k, resting_eigenvalue(cfg, candidate, k))
                    for k in candidate.working_set.resting(cfg.M))
    worst = max((lam for _, lam in resting), default=-np.inf)
    if worst > eps_stab:
        return StabilityVerdict(Classification.UNSTABLE, (), resting, worst)
    spectrum = tuple(eigenvalues(jacobian(cfg, candidate.state)))
    margin = max(ev.real for ev in spectrum)
    if margin < -eps_stab:
        cls = Classification.STABLE
    elif margin > eps_stab:
        cls = Classification.UNSTABLE
    else:
        cls = Classification.INCONCLUSIVE
    return StabilityVerdict(cls, spectrum, resting, margin)


class InternalConsistencyError(AssertionError):
    """A proven structural fact failed numerically; indicates a solver bug."""


def stable_equilibria(cfg: EcosystemConfig, tol: float = 1e-12,
                      eps_stab: float = EPS_STAB):
    """Enumerate all equilibria, classify each, and cross-check that only the
    prefix working set {1..w_star} can come back stable.

    Returns (results, wstar) where results is a list of
    (EquilibriumCandidate, StabilityVerdict) in enumeration order.
    """
    ws = w_star(cfg)
    target = tuple(range(1, ws + 1))
    results = []
    for cand in enumerate_equilibria(cfg, tol):
        verdict = classify(cfg, cand, eps_stab)
        if (verdict.classification is Classification.STABLE
                and cand.working_set.indices != target):
            raise InternalConsistencyError(
                f"working set {cand.working_set.indices} classified stable "
                f"but only {target} may be")
        results.append((cand, verdict))
    return results, ws


def verdicts_to_csv(results, M: int) -> str:
    buf = io.StringIO()
    eig_cols = ",".join(f"eig{i+1}_re,eig{i+1}_im" for i in range(M))
    buf.write(f"working_set,classification,max_real_part,{eig_cols}\n")
    for cand, verdict in results:
        ws = "|".join(str(i) for i in cand.working_set)
        evs = list(verdict.eigenvalues) + [complex(np.nan, np.nan)] * (
            M - len(verdict.eigenvalues))
        flat = ",".join(f"{e.real:.17g},{e.imag:.17g}" for e in evs)
        buf.write(f"{ws},{verdict.classification.value},"
                  f"{verdict.margin:.17g},{flat}\n")
    return buf.getvalue()
