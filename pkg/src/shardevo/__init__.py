"""Evolutionary-game toolkit for consensus-processor allocation across
parallel sharded blockchains: payoff model, replicator dynamics, equilibrium
enumeration, linear stability analysis and a stochastic agent simulator."""

from .ecosystem import (ConfigError, CostCurve, EcosystemConfig, StateError,
                        WorkingSet, as_state, mean_payoff, payoff,
                        payoff_vector, working_set_of)
from .elastico import (ElasticoParams, GModel, coupon_draws_asymptotic,
                       coupon_draws_monte_carlo, derive_game_inputs,
                       epoch_cost, epoch_reward, epoch_time,
                       expected_puzzles_per_processor, harmonic,
                       puzzles_fraction_curve)
from .dynamics import (IntegratorSpec, Trajectory, integrate, jacobian,
                       payoff_trace, replicator_field)
from .equilibrium import (EquilibriumCandidate, enumerate_equilibria,
                          existence_check, k_function, solve_equilibrium,
                          w_star)
from .stability import (Classification, StabilityVerdict, classify,
                        eigenvalues, resting_eigenvalue, stable_equilibria)
from .agents import (AgentSimSpec, EmpiricalTrajectory, compare_to_ode,
                     simulate_agents)

__version__ = "0.1.0"
