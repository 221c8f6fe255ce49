#pragma once

#include <cstddef>
#include <cstdint>

#include "rgm/divergence.hpp"
#include "rgm/mdp.hpp"
#include "rgm/rng.hpp"
#include "rgm/table.hpp"

namespace rgm {

/**
 * Independent checks for the solver built from first principles: the inner
 * problem max_d E_d[r_hat] - alpha D_f(d || d_dataset) subject to the
 * Bellman flow equations is solved three unrelated ways (high-precision
 * dual descent, primal recovery, brute-force policy search) so the solver's
 * machinery can be compared against values it had no hand in producing.
 */

struct DualSolution {
    ValueVector v_star;
    double dual_value = 0.0;
    double grad_norm = 0.0;  // max-norm of the final gradient
    std::size_t iterations = 0;
};

/**
 * Minimizes the dual objective
 *   (1-gamma) E_mu0[V] + alpha E_dD[f*(Adv(V)/alpha)]
 * (KL: the simplex-restricted log E_dD[exp(Adv/alpha)]) by full-batch
 * gradient descent with Armijo backtracking, down to a gradient max-norm of
 * grad_tol. d_dataset must be strictly positive on every entry. Throws
 * std::runtime_error when the budget runs out before the tolerance is met.
 * v0 optionally overrides the zero initialization (restart consistency
 * checks use this).
 */
DualSolution dual_solve_high_precision(const TabularMDP& mdp, const Table& r_hat,
                                       const Table& d_dataset, double alpha, FDivergence kind,
                                       double grad_tol = 1e-10,
                                       std::size_t max_iterations = 2000000,
                                       const ValueVector* v0 = nullptr);

struct PrimalSolution {
    OccupancyMeasure d_star;
    double objective = 0.0;      // E_{d*}[r_hat] - alpha D_f(d* || d_dataset)
    double flow_residual = 0.0;  // max-norm Bellman flow violation of d*
};

/// E_d[r_hat] - alpha D_f(d || d_dataset); the inner objective both oracles
/// maximize.
double regularized_objective(const OccupancyMeasure& d, const Table& r_hat,
                             const Table& d_dataset, double alpha, FDivergence kind);

/**
 * Candidate primal optimum recovered from a dual solution:
 * d*(s,a) = d_dataset(s,a) * f*'(Adv(V*)/alpha), self-normalized on the KL
 * path. At an exact dual optimum d* is flow-feasible and its objective
 * equals the dual value (strong duality); both are reported as measured.
 */
PrimalSolution primal_from_dual(const ValueVector& v_star, const Table& r_hat,
                                const Table& d_dataset, const TabularMDP& mdp, double alpha,
                                FDivergence kind);

struct GridSearchResult {
    Policy best_policy;
    double best_objective = 0.0;
    std::size_t evaluated = 0;
};

/**
 * Brute force over stochastic policies: every per-state action distribution
 * ranges over the simplex lattice with `resolution` points per coordinate
 * (all compositions of resolution-1), each candidate policy's exact
 * occupancy is computed, and the regularized objective is maximized.
 * Throws std::invalid_argument when the lattice would exceed max_evals
 * policies.
 */
GridSearchResult policy_grid_search(const TabularMDP& mdp, const Table& r_hat,
                                    const Table& d_dataset, double alpha, FDivergence kind,
                                    std::size_t resolution, std::size_t max_evals = 2000000);

struct ValueIterationResult {
    ValueVector v;
    Policy greedy;  // deterministic, ties to the lowest action index
    std::size_t iterations = 0;
};

/// Standard discounted value iteration from V = 0 to successive sup-norm
/// difference <= tol.
ValueIterationResult value_iteration(const TabularMDP& mdp, const Table& reward, double tol);

/**
 * Random test instance: a dense strictly-positive MDP with gamma = 0.9,
 * rewards uniform in [-1, 1], and d_dataset set to the exact occupancy of
 * the uniform policy (so d_dataset is flow-feasible and strictly positive).
 */
struct OracleInstance {
    TabularMDP mdp;
    Table r_hat;
    Table d_dataset;
};

OracleInstance random_instance(Rng& rng, std::size_t max_states = 5, std::size_t max_actions = 3);

}  // namespace rgm
