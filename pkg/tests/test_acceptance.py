"""End-to-end acceptance checks, one test per criterion.

Each test prints exactly one `criterion NN ...: PASS|FAIL` line directly to
the terminal (bypassing capture) and enforces its runtime budget after the
eigensolver has been warmed up once.
"""

import time

import numpy as np
import pytest

from shardevo import (AgentSimSpec, Classification, EcosystemConfig,
                      IntegratorSpec, WorkingSet, classify, compare_to_ode,
                      coupon_draws_monte_carlo, eigenvalues,
                      enumerate_equilibria,
                      expected_puzzles_per_processor, integrate, jacobian,
                      k_function, payoff_trace, resting_eigenvalue,
                      simulate_agents, solve_equilibrium, w_star)
from shardevo.equilibrium import k_batch, k_domain_bounds
from shardevo.stability import stable_equilibria

from conftest import X0_NEAR_SADDLE, random_simplex

REF = EcosystemConfig(alpha=(0.7, 0.5, 0.3, 0.1), tau=0.01)
X_E1 = np.array([0.4225, 0.3148, 0.1975, 0.0652])
X_E2 = np.array([0.4499, 0.3369, 0.2132, 0.0])


@pytest.fixture(scope="module", autouse=True)
def warm_eigensolver():
    # first call pays the (disk-cached) JIT compile; keep it out of budgets
    eigenvalues(np.eye(3))


def _run(capsys, num, name, body):
    try:
        body()
    except BaseException:
        with capsys.disabled():
            print(f"criterion {num:02d} {name}: FAIL")
        raise
    with capsys.disabled():
        print(f"criterion {num:02d} {name}: PASS")


def test_criterion_01_equilibrium_reproduction(capsys):
    def body():
        t0 = time.perf_counter()
        e1 = solve_equilibrium(REF, WorkingSet((1, 2, 3, 4)))
        e2 = solve_equilibrium(REF, WorkingSet((1, 2, 3)))
        elapsed = time.perf_counter() - t0
        assert np.max(np.abs(e1.state - X_E1)) < 1e-3
        assert np.max(np.abs(e2.state - X_E2)) < 1e-3
        assert e2.state[3] == 0.0
        assert elapsed < 1.0, f"solve took {elapsed:.3f}s"
    _run(capsys, 1, "equilibrium reproduction", body)


def test_criterion_02_stability_reproduction(capsys):
    def body():
        e1 = solve_equilibrium(REF, WorkingSet((1, 2, 3, 4)))
        e2 = solve_equilibrium(REF, WorkingSet((1, 2, 3)))
        t0 = time.perf_counter()
        v1 = classify(REF, e1)
        v2 = classify(REF, e2)
        lam4 = resting_eigenvalue(REF, e2, 4)
        spectrum = eigenvalues(jacobian(REF, e2.state))
        elapsed = time.perf_counter() - t0
        assert v1.classification is Classification.STABLE
        assert v2.classification is Classification.UNSTABLE
        assert abs(lam4 - 8.85) < 0.02
        assert np.min(np.abs(spectrum - lam4)) < 1e-8
        assert elapsed < 1.0, f"classification took {elapsed:.3f}s"
    _run(capsys, 2, "stability reproduction", body)


@pytest.fixture(scope="module")
def saddle_escape_trajectory():
    t0 = time.perf_counter()
    traj = integrate(REF, X0_NEAR_SADDLE,
                     IntegratorSpec(t_end=50.0, step=0.01))
    return traj, time.perf_counter() - t0


def test_criterion_03_trajectory_reproduction(capsys,
                                              saddle_escape_trajectory):
    def body():
        traj, elapsed = saddle_escape_trajectory
        assert np.max(np.abs(traj.final_state() - X_E1)) < 1e-3
        # once the path leaves the saddle's 1e-3 neighbourhood it must never
        # come back within 1e-4 of it
        dist = np.max(np.abs(traj.states - X_E2), axis=1)
        left = int(np.argmax(dist > 1e-3))
        assert dist[left] > 1e-3
        assert np.min(dist[left:]) > 1e-4
        assert elapsed < 10.0, f"integration took {elapsed:.3f}s"
    _run(capsys, 3, "trajectory reproduction", body)


def test_criterion_04_payoff_equalization(capsys, saddle_escape_trajectory):
    def body():
        trace = payoff_trace(REF, saddle_escape_trajectory[0])
        assert abs(trace[0, 3] - 9.09) < 0.01
        assert np.max(np.abs(trace[-1] - 1.266)) < 1e-3
    _run(capsys, 4, "payoff equalization", body)


def test_criterion_05_price_scale_sweep(capsys):
    def body():
        grid = np.round(np.arange(0.5, 1.501, 0.1), 10)
        x1s, x4s = [], []
        for kappa in grid:
            scaled = EcosystemConfig(
                alpha=tuple(a * kappa for a in REF.alpha), tau=REF.tau)
            results, _ = stable_equilibria(scaled)
            stable = [c for c, v in results
                      if v.classification is Classification.STABLE]
            assert len(stable) == 1, f"kappa={kappa}: {len(stable)} stable"
            x1s.append(stable[0].state[0])
            x4s.append(stable[0].state[3])
        assert np.all(np.diff(x1s) >= -1e-12)
        assert np.all(np.diff(x4s) <= 1e-12)
        anchor = np.where(np.isclose(grid, 1.0))[0][0]
        assert abs(x1s[anchor] - X_E1[0]) < 1e-3
        assert abs(x4s[anchor] - X_E1[3]) < 1e-3
    _run(capsys, 5, "price-scale sweep monotonicity", body)


def test_criterion_06_structural_properties(capsys):
    def body():
        rng = np.random.default_rng(20260823)
        t0 = time.perf_counter()
        for _ in range(1000):
            M = int(rng.integers(2, 9))
            alpha = tuple(np.sort(rng.uniform(1e-3, 1.0, M))[::-1])
            tau = float(rng.uniform(1e-3, 0.1))
            cfg = EcosystemConfig(alpha=alpha, tau=tau)
            a = cfg.alpha_array

            subsets = [tuple(i + 1 for i in range(M) if mask >> i & 1)
                       for mask in range(1, 2 ** M)]
            cands = enumerate_equilibria(cfg)
            passing = {c.working_set.indices for c in cands}

            # (a) passing sets solve tightly ...
            for c in cands:
                assert c.residual < 1e-9, (alpha, tau, c.working_set.indices)
            # ... and failing sets leave S(b) = sum K(alpha_j, b) without a
            # root: either the payoff bracket is empty, or S at its right
            # endpoint (the minimum of the decreasing S) is still >= 1
            h1 = float(cfg.cost.value(1.0))
            for s in subsets:
                if s in passing:
                    continue
                b_lo = a[s[0] - 1] / (1.0 + tau) - h1
                b_hi = a[s[-1] - 1] / tau
                if b_hi - b_lo <= 1e-12:
                    continue
                s_min = float(k_batch(cfg, a[np.asarray(s) - 1], b_hi).sum())
                assert s_min >= 1.0 - 1e-9, (alpha, tau, s, s_min)

            # (b) at most one stable candidate and it is the prefix {1..w*};
            # (c) analytic resting eigenvalues sit in the numerical spectrum
            target = tuple(range(1, w_star(cfg) + 1))
            n_stable = 0
            for c in cands:
                v = classify(cfg, c)
                if v.classification is Classification.STABLE:
                    n_stable += 1
                    assert c.working_set.indices == target, (alpha, tau)
                spectrum = eigenvalues(jacobian(cfg, c.state))
                for _, lam in ((k, resting_eigenvalue(cfg, c, k))
                               for k in c.working_set.resting(M)):
                    assert np.min(np.abs(spectrum - lam)) < 1e-8, (alpha, tau)
            assert n_stable <= 1
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"property sweep took {elapsed:.1f}s"
    _run(capsys, 6, "existence/stability property sweep", body)


def test_criterion_07_numerical_kernel_oracles(capsys):
    def body():
        rng = np.random.default_rng(4242)

        # Jacobian vs central finite differences at 100 random points
        def raw_field(cfg, x):
            u = cfg.alpha_array / (x + cfg.tau) - cfg.cost.value(x)
            return x * (u - x @ u)

        for _ in range(100):
            M = int(rng.integers(2, 7))
            alpha = tuple(np.sort(rng.uniform(0.05, 1.0, M))[::-1])
            cfg = EcosystemConfig(alpha=alpha, tau=float(rng.uniform(0.005, 0.1)))
            x = random_simplex(rng, M)
            J = jacobian(cfg, x)
            fd = np.zeros((M, M))
            eps = 1e-6
            for j in range(M):
                e = np.zeros(M)
                e[j] = eps
                fd[:, j] = (raw_field(cfg, x + e) - raw_field(cfg, x - e)) / (2 * eps)
            assert np.max(np.abs(J - fd)) / max(np.abs(fd).max(), 1.0) < 1e-5

        # eigensolver: every reported eigenvalue annihilates det(A - ev I)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            A = rng.normal(size=(n, n))
            norm = np.linalg.norm(A, 2)
            for ev in eigenvalues(A):
                res = abs(np.linalg.det(A - ev * np.eye(n)))
                assert res < 1e-8 * norm ** n

        # K monotone: increasing in a, decreasing in b, on 1000 samples
        cfg = REF
        for _ in range(1000):
            a = float(rng.uniform(0.2, 1.0))
            lo, hi = k_domain_bounds(cfg, a)
            b = float(rng.uniform(max(lo, 0.0) + 0.05, hi - 0.05))
            x = k_function(cfg, a, b)
            assert k_function(cfg, a * 1.01, b) > x
            assert k_function(cfg, a, b + 0.01) < x
    _run(capsys, 7, "numerical-kernel oracles", body)


def test_criterion_08_simplex_conservation(capsys):
    def body():
        rng = np.random.default_rng(99)
        trajectories = []
        for method in ("rk4", "rk45"):
            spec = IntegratorSpec(method=method, t_end=10.0, step=0.01)
            for _ in range(5):
                trajectories.append(integrate(REF, random_simplex(rng, 4), spec))
        # face starts: zero components must remain exactly zero
        for x0 in ([0.6, 0.4, 0.0, 0.0], [0.0, 0.5, 0.5, 0.0]):
            traj = integrate(REF, x0, IntegratorSpec(t_end=10.0, step=0.01))
            dead = np.asarray(x0) == 0.0
            assert np.all(traj.states[:, dead] == 0.0)
            trajectories.append(traj)
        for traj in trajectories:
            assert np.max(np.abs(traj.states.sum(axis=1) - 1.0)) <= 1e-9
            assert np.min(traj.states) >= 0.0
    _run(capsys, 8, "simplex conservation", body)


def test_criterion_09_mean_field_validation(capsys):
    def body():
        t0 = time.perf_counter()
        horizon = 100.0
        spec0 = AgentSimSpec(N=10_000, horizon=horizon, seed=0)
        ode = integrate(REF, X0_NEAR_SADDLE, IntegratorSpec(
            t_end=horizon * spec0.time_scale, step=0.01, record_every=10))
        sups = []
        for seed in range(20):
            spec = AgentSimSpec(N=10_000, horizon=horizon, seed=seed)
            emp = simulate_agents(REF, X0_NEAR_SADDLE, spec)
            sups.append(compare_to_ode(emp, ode, spec.time_scale).sup_norm)
        elapsed = time.perf_counter() - t0
        assert float(np.median(sups)) < 0.05, sorted(sups)
        assert elapsed < 60.0, f"agent runs took {elapsed:.1f}s"
    _run(capsys, 9, "mean-field validation", body)


def test_criterion_10_coupon_collector_oracle(capsys):
    def body():
        mean, se = coupon_draws_monte_carlo(4, 1, trials=100_000, seed=1)
        per_processor = mean / 4.0
        assert abs(per_processor - 25.0 / 12.0) < 3 * se / 4.0
        # f(n) increases with n at fixed c (committees scale with n)
        c = 2
        ns = np.array([2.0 * c * (1.5 ** k) for k in range(12)])
        fs = [expected_puzzles_per_processor(n / c, c, n) for n in ns]
        assert all(b > a for a, b in zip(fs, fs[1:]))
    _run(capsys, 10, "coupon-collector oracle", body)
