#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rgm/table.hpp"

namespace rgm {

/// State values indexed by state.
using ValueVector = std::vector<double>;

/// pi(a|s); every row is a distribution over actions.
using Policy = Table;

/// Normalized discounted state-action visitation d(s,a); entries sum to 1.
using OccupancyMeasure = Table;

/**
 * Finite MDP with dense transition kernel.
 *
 * transition is laid out [s][a][s'] (row-major, size S*A*S). Every (s,a) row
 * must be a probability distribution, initial_dist a distribution over
 * states, and gamma must lie strictly inside (0, 1). Construct via the
 * aggregate and call validate_mdp once; instances are treated as immutable
 * afterwards.
 */
struct TabularMDP {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition;
    std::vector<double> initial_dist;
    double gamma = 0.99;
    std::string id;

    double prob(std::size_t s, std::size_t a, std::size_t s2) const {
        return transition[(s * n_actions + a) * n_states + s2];
    }
    double& prob(std::size_t s, std::size_t a, std::size_t s2) {
        return transition[(s * n_actions + a) * n_states + s2];
    }
};

/// Throws std::invalid_argument when shapes, stochasticity, or gamma are off.
void validate_mdp(const TabularMDP& mdp);

/// True when every action in s returns to s with probability 1.
bool is_absorbing_state(const TabularMDP& mdp, std::size_t s);

/// Policy with uniform action probabilities in every state.
Policy uniform_policy(const TabularMDP& mdp);

/**
 * Exact normalized discounted occupancy of a policy.
 *
 * Solves the linear flow system (I - gamma * P_pi^T) rho = (1 - gamma) * mu0
 * for the state visitation rho and returns d(s,a) = rho(s) * pi(a|s). Throws
 * std::runtime_error if the recovered occupancy violates the flow equations
 * by more than 1e-9 in any state.
 */
OccupancyMeasure occupancy_of_policy(const TabularMDP& mdp, const Policy& pi);

/**
 * Conditional policy of an occupancy: pi(a|s) = d(s,a) / sum_a' d(s,a').
 * States with zero mass fall back to the uniform policy.
 */
Policy policy_of_occupancy(const TabularMDP& mdp, const OccupancyMeasure& d);

/**
 * Per-state residual of the Bellman flow equations,
 *   sum_a d(s,a) - (1-gamma) mu0(s) - gamma sum_{s',a'} T(s|s',a') d(s',a').
 * Zero everywhere exactly when d is a valid occupancy for some policy.
 */
ValueVector bellman_flow_residual(const TabularMDP& mdp, const Table& d);

/// Largest absolute entry of bellman_flow_residual.
double max_flow_residual(const TabularMDP& mdp, const Table& d);

/// Expected next-state value (T V)(s,a) = sum_s' T(s'|s,a) V(s').
Table transition_apply(const TabularMDP& mdp, const ValueVector& v);

/// Mass flowing into each state: (T* d)(s') = sum_{s,a} T(s'|s,a) d(s,a).
ValueVector transition_apply_transpose(const TabularMDP& mdp, const Table& d);

/// E_d[r] = sum_{s,a} d(s,a) r(s,a).
double expected_value(const Table& d, const Table& r);

/**
 * Occupancy restricted to non-absorbing states and renormalized. Terminal
 * self-loop states soak up most of the discounted mass on episodic tasks;
 * visitation comparisons and heatmaps read better over the transient part.
 * Identity for MDPs without absorbing states. Throws when all mass sits in
 * absorbing states.
 */
OccupancyMeasure transient_occupancy(const TabularMDP& mdp, const OccupancyMeasure& d);

}  // namespace rgm
