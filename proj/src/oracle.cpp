#include "rgm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rgm {

namespace {

void require_positive_support(const Table& d_dataset) {
    for (double v : d_dataset.data) {
        if (!(v > 0.0))
            throw std::invalid_argument("oracle: d_dataset must be strictly positive everywhere");
    }
}

/// (r_hat + gamma T V - V) / alpha, assembled locally so the oracle does not
/// lean on the solver's advantage plumbing.
Table scaled_adv(const TabularMDP& mdp, const Table& r_hat, const ValueVector& v, double alpha) {
    Table tv = transition_apply(mdp, v);
    Table x(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            x(s, a) = (r_hat(s, a) + mdp.gamma * tv(s, a) - v[s]) / alpha;
    }
    return x;
}

double dual_objective(const TabularMDP& mdp, const Table& r_hat, const Table& d_dataset,
                      double alpha, FDivergence kind, const ValueVector& v) {
    Table x = scaled_adv(mdp, r_hat, v, alpha);
    double base = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) base += mdp.initial_dist[s] * v[s];
    base *= 1.0 - mdp.gamma;
    if (kind == FDivergence::KL) return base + alpha * log_expectation_exp(d_dataset, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        acc += d_dataset.data[i] * f_star_eval(kind, x.data[i]);
    return base + alpha * acc;
}

/// Per-entry weight of dX/dV inside the conjugate term: softmax of the
/// advantage under d_dataset for KL, d_dataset * f*'(x) otherwise.
Table conjugate_weights(const Table& d_dataset, const Table& x, FDivergence kind) {
    Table c(x.rows, x.cols, 0.0);
    if (kind == FDivergence::KL) {
        double m = *std::max_element(x.data.begin(), x.data.end());
        double z = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            c.data[i] = d_dataset.data[i] * std::exp(x.data[i] - m);
            z += c.data[i];
        }
        for (double& e : c.data) e /= z;
    } else {
        for (std::size_t i = 0; i < x.data.size(); ++i)
            c.data[i] = d_dataset.data[i] * f_star_prime(kind, x.data[i]);
    }
    return c;
}

ValueVector dual_gradient(const TabularMDP& mdp, const Table& r_hat, const Table& d_dataset,
                          double alpha, FDivergence kind, const ValueVector& v) {
    Table x = scaled_adv(mdp, r_hat, v, alpha);
    Table c = conjugate_weights(d_dataset, x, kind);
    // d(Adv(s,a))/dV[t] = gamma T(t|s,a) - [s == t]; accumulate directly.
    ValueVector grad(mdp.n_states);
    for (std::size_t t = 0; t < mdp.n_states; ++t)
        grad[t] = (1.0 - mdp.gamma) * mdp.initial_dist[t];
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            double w = c(s, a);
            if (w == 0.0) continue;
            grad[s] -= w;
            const double* row = &mdp.transition[(s * mdp.n_actions + a) * mdp.n_states];
            for (std::size_t t = 0; t < mdp.n_states; ++t) grad[t] += mdp.gamma * w * row[t];
        }
    }
    return grad;
}

double max_abs(const ValueVector& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
}

/**
 * Hessian of the dual objective in V. With C[(s,a),t] = gamma T(t|s,a) - [s==t]
 * the chain rule gives (1/alpha) C^T M C, where M is diag(p) - p p^T for the
 * KL softmax weights p and diag(d_dataset * f*''(x)) for chi^2 (f*'' is the
 * indicator of x > -1). The KL Hessian is singular along constant shifts of
 * V (the restricted-conjugate dual is shift invariant), so callers must damp.
 */
Eigen::MatrixXd dual_hessian(const TabularMDP& mdp, const Table& d_dataset, const Table& x,
                             double alpha, FDivergence kind) {
    const std::size_t n = mdp.n_states;
    const std::size_t entries = x.data.size();
    Eigen::MatrixXd c_mat(entries, n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            std::size_t row = s * mdp.n_actions + a;
            const double* tr = &mdp.transition[row * n];
            for (std::size_t t = 0; t < n; ++t)
                c_mat(row, t) = mdp.gamma * tr[t] - (s == t ? 1.0 : 0.0);
        }
    }
    if (kind == FDivergence::KL) {
        Table p = conjugate_weights(d_dataset, x, kind);
        Eigen::VectorXd pv(entries);
        for (std::size_t i = 0; i < entries; ++i) pv[i] = p.data[i];
        Eigen::MatrixXd weighted = pv.asDiagonal() * c_mat;
        return (c_mat.transpose() * weighted -
                (c_mat.transpose() * pv) * (pv.transpose() * c_mat)) /
               alpha;
    }
    Eigen::VectorXd curv(entries);
    for (std::size_t i = 0; i < entries; ++i)
        curv[i] = x.data[i] > -1.0 ? d_dataset.data[i] : 0.0;
    return c_mat.transpose() * (curv.asDiagonal() * c_mat) / alpha;
}

}  // namespace

DualSolution dual_solve_high_precision(const TabularMDP& mdp, const Table& r_hat,
                                       const Table& d_dataset, double alpha, FDivergence kind,
                                       double grad_tol, std::size_t max_iterations,
                                       const ValueVector* v0) {
    if (r_hat.rows != mdp.n_states || r_hat.cols != mdp.n_actions)
        throw std::invalid_argument("dual_solve_high_precision: reward shape mismatch");
    if (!r_hat.same_shape(d_dataset))
        throw std::invalid_argument("dual_solve_high_precision: d_dataset shape mismatch");
    if (!(alpha > 0.0)) throw std::invalid_argument("dual_solve_high_precision: alpha must be positive");
    require_positive_support(d_dataset);

    ValueVector v = v0 ? *v0 : ValueVector(mdp.n_states, 0.0);
    if (v.size() != mdp.n_states)
        throw std::invalid_argument("dual_solve_high_precision: v0 size mismatch");

    double loss = dual_objective(mdp, r_hat, d_dataset, alpha, kind, v);
    const double armijo = 1e-4;
    double damping = 1e-10;

    // Damped Newton. The objective is convex; the damping absorbs the KL
    // shift-direction null space and the chi^2 kink plateaus.
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        ValueVector g = dual_gradient(mdp, r_hat, d_dataset, alpha, kind, v);
        double gn = max_abs(g);
        if (gn <= grad_tol) return {v, loss, gn, iter};

        Table x = scaled_adv(mdp, r_hat, v, alpha);
        Eigen::MatrixXd hess = dual_hessian(mdp, d_dataset, x, alpha, kind);
        Eigen::VectorXd gv(mdp.n_states);
        for (std::size_t s = 0; s < mdp.n_states; ++s) gv[s] = g[s];

        Eigen::VectorXd dir;
        double descent = 0.0;
        for (int attempt = 0; attempt < 60; ++attempt) {
            Eigen::MatrixXd damped = hess;
            damped.diagonal().array() += damping;
            dir = damped.ldlt().solve(-gv);
            descent = gv.dot(dir);
            if (dir.allFinite() && descent < 0.0) break;
            damping *= 10.0;
        }
        if (!(descent < 0.0))
            throw std::runtime_error(
                "dual_solve_high_precision: no descent direction at iteration " +
                std::to_string(iter));

        bool accepted = false;
        double step = 1.0;
        for (int bt = 0; bt < 80 && !accepted; ++bt) {
            ValueVector trial = v;
            for (std::size_t s = 0; s < trial.size(); ++s) trial[s] += step * dir[s];
            double trial_loss = dual_objective(mdp, r_hat, d_dataset, alpha, kind, trial);
            double needed = -armijo * step * descent;
            // Near the optimum the guaranteed decrease drops below double
            // precision; accept the (tiny) step instead of stalling.
            if (trial_loss <= loss - needed || needed <= 1e-14 * (std::abs(loss) + 1.0)) {
                v = std::move(trial);
                loss = trial_loss;
                accepted = true;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted)
            throw std::runtime_error("dual_solve_high_precision: line search failed at iteration " +
                                     std::to_string(iter));
        damping = std::max(damping * 0.25, 1e-10);
    }
    throw std::runtime_error("dual_solve_high_precision: gradient tolerance not reached within budget");
}

double regularized_objective(const OccupancyMeasure& d, const Table& r_hat,
                             const Table& d_dataset, double alpha, FDivergence kind) {
    return expected_value(d, r_hat) - alpha * f_divergence(d, d_dataset, kind);
}

PrimalSolution primal_from_dual(const ValueVector& v_star, const Table& r_hat,
                                const Table& d_dataset, const TabularMDP& mdp, double alpha,
                                FDivergence kind) {
    require_positive_support(d_dataset);
    Table x = scaled_adv(mdp, r_hat, v_star, alpha);
    PrimalSolution sol;
    sol.d_star = Table(x.rows, x.cols, 0.0);
    if (kind == FDivergence::KL) {
        double m = *std::max_element(x.data.begin(), x.data.end());
        double z = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            sol.d_star.data[i] = d_dataset.data[i] * std::exp(x.data[i] - m);
            z += sol.d_star.data[i];
        }
        for (double& e : sol.d_star.data) e /= z;
    } else {
        for (std::size_t i = 0; i < x.data.size(); ++i)
            sol.d_star.data[i] = d_dataset.data[i] * f_star_prime(kind, x.data[i]);
    }
    sol.objective = regularized_objective(sol.d_star, r_hat, d_dataset, alpha, kind);
    sol.flow_residual = max_flow_residual(mdp, sol.d_star);
    return sol;
}

namespace {

/// All action distributions with entries k/(resolution-1).
std::vector<std::vector<double>> simplex_lattice(std::size_t n_actions, std::size_t resolution) {
    if (resolution < 2) throw std::invalid_argument("policy_grid_search: resolution must be >= 2");
    if (n_actions == 1) return {{1.0}};
    std::vector<std::vector<double>> points;
    std::vector<std::size_t> counts(n_actions, 0);
    const std::size_t total = resolution - 1;
    // Lexicographic enumeration of compositions of `total` into n_actions parts.
    std::size_t level = 0;
    std::size_t remaining = total;
    while (true) {
        if (level + 1 == n_actions) {
            counts[level] = remaining;
            std::vector<double> p(n_actions);
            for (std::size_t a = 0; a < n_actions; ++a)
                p[a] = static_cast<double>(counts[a]) / static_cast<double>(total);
            points.push_back(std::move(p));
            // Backtrack to the deepest level that can still be decremented.
            while (level > 0) {
                --level;
                if (counts[level] > 0) break;
            }
            if (level == 0 && counts[0] == 0) break;
            --counts[level];
            remaining = total;
            for (std::size_t k = 0; k <= level; ++k) remaining -= counts[k];
            ++level;
        } else {
            counts[level] = remaining;
            remaining = 0;
            ++level;
        }
    }
    return points;
}

}  // namespace

GridSearchResult policy_grid_search(const TabularMDP& mdp, const Table& r_hat,
                                    const Table& d_dataset, double alpha, FDivergence kind,
                                    std::size_t resolution, std::size_t max_evals) {
    require_positive_support(d_dataset);
    std::vector<std::vector<double>> lattice = simplex_lattice(mdp.n_actions, resolution);

    double budget = 1.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        budget *= static_cast<double>(lattice.size());
        if (budget > static_cast<double>(max_evals))
            throw std::invalid_argument("policy_grid_search: lattice exceeds the evaluation budget");
    }

    GridSearchResult result;
    result.best_objective = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> digits(mdp.n_states, 0);
    Policy pi(mdp.n_states, mdp.n_actions);
    while (true) {
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            for (std::size_t a = 0; a < mdp.n_actions; ++a) pi(s, a) = lattice[digits[s]][a];
        }
        OccupancyMeasure d = occupancy_of_policy(mdp, pi);
        double obj = regularized_objective(d, r_hat, d_dataset, alpha, kind);
        ++result.evaluated;
        if (obj > result.best_objective) {
            result.best_objective = obj;
            result.best_policy = pi;
        }
        std::size_t s = 0;
        while (s < mdp.n_states && ++digits[s] == lattice.size()) digits[s++] = 0;
        if (s == mdp.n_states) break;
    }
    return result;
}

ValueIterationResult value_iteration(const TabularMDP& mdp, const Table& reward, double tol) {
    if (reward.rows != mdp.n_states || reward.cols != mdp.n_actions)
        throw std::invalid_argument("value_iteration: reward shape mismatch");
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");

    ValueIterationResult out;
    out.v.assign(mdp.n_states, 0.0);
    const std::size_t budget = 1000000;
    for (out.iterations = 0; out.iterations < budget; ++out.iterations) {
        Table q = transition_apply(mdp, out.v);
        double delta = 0.0;
        for (std::size_t s = 0; s < mdp.n_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < mdp.n_actions; ++a)
                best = std::max(best, reward(s, a) + mdp.gamma * q(s, a));
            delta = std::max(delta, std::abs(best - out.v[s]));
            out.v[s] = best;
        }
        if (delta <= tol) break;
    }
    if (out.iterations == budget)
        throw std::runtime_error("value_iteration: tolerance not reached within budget");

    out.greedy = Policy(mdp.n_states, mdp.n_actions, 0.0);
    Table q = transition_apply(mdp, out.v);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        std::size_t best_a = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            double val = reward(s, a) + mdp.gamma * q(s, a);
            if (val > best) {
                best = val;
                best_a = a;
            }
        }
        out.greedy(s, best_a) = 1.0;
    }
    return out;
}

OracleInstance random_instance(Rng& rng, std::size_t max_states, std::size_t max_actions) {
    if (max_states < 2 || max_actions < 2)
        throw std::invalid_argument("random_instance: need at least 2 states and 2 actions");
    OracleInstance inst;
    std::size_t S = 2 + rng.uniform_below(max_states - 1);
    std::size_t A = 2 + rng.uniform_below(max_actions - 1);
    inst.mdp.n_states = S;
    inst.mdp.n_actions = A;
    inst.mdp.gamma = 0.9;
    inst.mdp.id = "oracle-instance";
    inst.mdp.transition.assign(S * A * S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            double total = 0.0;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                double e = 0.1 + rng.uniform01();
                inst.mdp.prob(s, a, s2) = e;
                total += e;
            }
            for (std::size_t s2 = 0; s2 < S; ++s2) inst.mdp.prob(s, a, s2) /= total;
        }
    }
    inst.mdp.initial_dist.assign(S, 0.0);
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        double e = 0.1 + rng.uniform01();
        inst.mdp.initial_dist[s] = e;
        total += e;
    }
    for (std::size_t s = 0; s < S; ++s) inst.mdp.initial_dist[s] /= total;
    validate_mdp(inst.mdp);

    inst.r_hat = Table(S, A);
    for (double& e : inst.r_hat.data) e = 2.0 * rng.uniform01() - 1.0;
    inst.d_dataset = occupancy_of_policy(inst.mdp, uniform_policy(inst.mdp));
    return inst;
}

}  // namespace rgm
