import numpy as np
import pytest

from shardevo import EcosystemConfig, WorkingSet, solve_equilibrium

# the four-chain reference instance used throughout: alpha descending,
# tau = 0.01, h(x) = ln(1+x)
REF_ALPHA = (0.7, 0.5, 0.3, 0.1)
REF_TAU = 0.01
X0_NEAR_SADDLE = [0.4498, 0.3369, 0.2132, 0.001]


@pytest.fixture(scope="session")
def ref_cfg():
    return EcosystemConfig(alpha=REF_ALPHA, tau=REF_TAU)


@pytest.fixture(scope="session")
def eq_full(ref_cfg):
    """Interior equilibrium, working set {1,2,3,4}."""
    return solve_equilibrium(ref_cfg, WorkingSet((1, 2, 3, 4)))


@pytest.fixture(scope="session")
def eq_face(ref_cfg):
    """Saddle on the x4 = 0 face, working set {1,2,3}."""
    return solve_equilibrium(ref_cfg, WorkingSet((1, 2, 3)))


def random_simplex(rng, M):
    x = rng.dirichlet(np.ones(M))
    return x / x.sum()


def random_instance(rng, m_lo=2, m_hi=8):
    M = int(rng.integers(m_lo, m_hi + 1))
    alpha = np.sort(rng.uniform(1e-3, 1.0, M))[::-1]
    tau = float(rng.uniform(1e-3, 0.1))
    return EcosystemConfig(alpha=tuple(alpha), tau=tau)
