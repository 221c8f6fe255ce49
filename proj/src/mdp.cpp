#include "rgm/mdp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace rgm {

namespace {

const double STOCHASTICITY_TOL = 1e-12;
const double FLOW_RESIDUAL_TOL = 1e-9;

}  // namespace

void validate_mdp(const TabularMDP& mdp) {
    const std::size_t S = mdp.n_states;
    const std::size_t A = mdp.n_actions;
    if (S == 0 || A == 0) throw std::invalid_argument("validate_mdp: empty state or action set");
    if (mdp.transition.size() != S * A * S)
        throw std::invalid_argument("validate_mdp: transition size does not match n_states*n_actions*n_states");
    if (mdp.initial_dist.size() != S)
        throw std::invalid_argument("validate_mdp: initial_dist size does not match n_states");
    if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0))
        throw std::invalid_argument("validate_mdp: gamma must lie in (0, 1)");

    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            double row = 0.0;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                double p = mdp.prob(s, a, s2);
                if (p < 0.0) throw std::invalid_argument("validate_mdp: negative transition probability");
                row += p;
            }
            if (std::abs(row - 1.0) > STOCHASTICITY_TOL)
                throw std::invalid_argument("validate_mdp: transition row does not sum to 1");
        }
    }

    double mass = 0.0;
    for (double p : mdp.initial_dist) {
        if (p < 0.0) throw std::invalid_argument("validate_mdp: negative initial probability");
        mass += p;
    }
    if (std::abs(mass - 1.0) > STOCHASTICITY_TOL)
        throw std::invalid_argument("validate_mdp: initial_dist does not sum to 1");
}

bool is_absorbing_state(const TabularMDP& mdp, std::size_t s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        if (mdp.prob(s, a, s) != 1.0) return false;
    }
    return true;
}

Policy uniform_policy(const TabularMDP& mdp) {
    return Policy(mdp.n_states, mdp.n_actions, 1.0 / static_cast<double>(mdp.n_actions));
}

OccupancyMeasure occupancy_of_policy(const TabularMDP& mdp, const Policy& pi) {
    const std::size_t S = mdp.n_states;
    const std::size_t A = mdp.n_actions;
    if (pi.rows != S || pi.cols != A)
        throw std::invalid_argument("occupancy_of_policy: policy shape mismatch");

    // State chain under pi: P(s'|s) = sum_a pi(a|s) T(s'|s,a).
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            double pa = pi(s, a);
            if (pa == 0.0) continue;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                // Transposed chain enters the flow system as -gamma * P^T.
                system(s2, s) -= mdp.gamma * pa * mdp.prob(s, a, s2);
            }
        }
    }

    Eigen::VectorXd rhs(S);
    for (std::size_t s = 0; s < S; ++s) rhs(s) = (1.0 - mdp.gamma) * mdp.initial_dist[s];

    Eigen::VectorXd rho = system.partialPivLu().solve(rhs);

    OccupancyMeasure d(S, A);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) d(s, a) = rho(s) * pi(s, a);
    }

    double res = max_flow_residual(mdp, d);
    if (!(res <= FLOW_RESIDUAL_TOL))
        throw std::runtime_error("occupancy_of_policy: flow residual " + std::to_string(res) +
                                 " exceeds tolerance");
    return d;
}

Policy policy_of_occupancy(const TabularMDP& mdp, const OccupancyMeasure& d) {
    if (d.rows != mdp.n_states || d.cols != mdp.n_actions)
        throw std::invalid_argument("policy_of_occupancy: occupancy shape mismatch");
    Policy pi(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        double mass = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) mass += d(s, a);
        if (mass > 0.0) {
            for (std::size_t a = 0; a < mdp.n_actions; ++a) pi(s, a) = d(s, a) / mass;
        } else {
            for (std::size_t a = 0; a < mdp.n_actions; ++a)
                pi(s, a) = 1.0 / static_cast<double>(mdp.n_actions);
        }
    }
    return pi;
}

ValueVector bellman_flow_residual(const TabularMDP& mdp, const Table& d) {
    if (d.rows != mdp.n_states || d.cols != mdp.n_actions)
        throw std::invalid_argument("bellman_flow_residual: shape mismatch");
    ValueVector inflow = transition_apply_transpose(mdp, d);
    ValueVector res(mdp.n_states);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        double out = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) out += d(s, a);
        res[s] = out - (1.0 - mdp.gamma) * mdp.initial_dist[s] - mdp.gamma * inflow[s];
    }
    return res;
}

double max_flow_residual(const TabularMDP& mdp, const Table& d) {
    double m = 0.0;
    for (double r : bellman_flow_residual(mdp, d)) m = std::max(m, std::abs(r));
    return m;
}

Table transition_apply(const TabularMDP& mdp, const ValueVector& v) {
    if (v.size() != mdp.n_states)
        throw std::invalid_argument("transition_apply: value vector size mismatch");
    Table out(mdp.n_states, mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            const double* row = &mdp.transition[(s * mdp.n_actions + a) * mdp.n_states];
            double acc = 0.0;
            for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) acc += row[s2] * v[s2];
            out(s, a) = acc;
        }
    }
    return out;
}

ValueVector transition_apply_transpose(const TabularMDP& mdp, const Table& d) {
    if (d.rows != mdp.n_states || d.cols != mdp.n_actions)
        throw std::invalid_argument("transition_apply_transpose: shape mismatch");
    ValueVector inflow(mdp.n_states, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            double mass = d(s, a);
            if (mass == 0.0) continue;
            const double* row = &mdp.transition[(s * mdp.n_actions + a) * mdp.n_states];
            for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) inflow[s2] += mass * row[s2];
        }
    }
    return inflow;
}

double expected_value(const Table& d, const Table& r) { return table_dot(d, r); }

OccupancyMeasure transient_occupancy(const TabularMDP& mdp, const OccupancyMeasure& d) {
    if (d.rows != mdp.n_states || d.cols != mdp.n_actions)
        throw std::invalid_argument("transient_occupancy: shape mismatch");
    OccupancyMeasure out = d;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        if (!is_absorbing_state(mdp, s)) continue;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) out(s, a) = 0.0;
    }
    double mass = table_sum(out);
    if (mass <= 0.0)
        throw std::runtime_error("transient_occupancy: no mass outside absorbing states");
    for (double& v : out.data) v /= mass;
    return out;
}

}  // namespace rgm
