#include "rgm/solver.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rgm {

namespace {

const double BOUND_CHAIN_TOL = 1e-12;

bool finite(double x) { return std::isfinite(x); }

/// x -> Adv/alpha for every entry, reusing one transition_apply pass.
Table scaled_advantage(const Table& r_hat, const ValueVector& v, const TabularMDP& mdp,
                       double alpha) {
    Table x = advantage(r_hat, v, mdp);
    for (double& e : x.data) e /= alpha;
    return x;
}

}  // namespace

Table RewardCorrection::delta_r() const {
    Table out = raw;
    for (double& e : out.data) e = bound * std::tanh(e);
    return out;
}

Table RewardCorrection::r_hat() const {
    if (!raw.same_shape(r_tilde))
        throw std::invalid_argument("RewardCorrection: raw and r_tilde shapes differ");
    Table out = delta_r();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += r_tilde.data[i];
    return out;
}

void validate_solver_config(const SolverConfig& config) {
    if (!(config.alpha > 0.0)) throw std::invalid_argument("SolverConfig: alpha must be positive");
    if (!(config.exp_clip > 1.0)) throw std::invalid_argument("SolverConfig: exp_clip must exceed 1");
    if (!(config.lr_v > 0.0)) throw std::invalid_argument("SolverConfig: lr_v must be positive");
    if (!(config.lr_dr < config.lr_v))
        throw std::invalid_argument("SolverConfig: two-timescale requires lr_dr < lr_v");
    if (config.lr_dr < 0.0) throw std::invalid_argument("SolverConfig: lr_dr must be >= 0");
    if (!(config.gamma > 0.0 && config.gamma < 1.0))
        throw std::invalid_argument("SolverConfig: gamma must lie in (0, 1)");
    if (!(config.ratio_epsilon > 0.0))
        throw std::invalid_argument("SolverConfig: ratio_epsilon must be positive");
    if (!(config.correction_bound > 0.0))
        throw std::invalid_argument("SolverConfig: correction_bound must be positive");
    if (config.log_every == 0) throw std::invalid_argument("SolverConfig: log_every must be positive");
}

double clipped_exp(double x, double clip) {
    double out = x >= std::log(clip) ? clip : std::exp(x);
    assert(out <= clip);
    return out;
}

Table advantage(const Table& r_hat, const ValueVector& v, const TabularMDP& mdp) {
    if (r_hat.rows != mdp.n_states || r_hat.cols != mdp.n_actions)
        throw std::invalid_argument("advantage: reward shape mismatch");
    Table adv = transition_apply(mdp, v);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            adv(s, a) = r_hat(s, a) + mdp.gamma * adv(s, a) - v[s];
    }
    return adv;
}

double lower_loss(const ValueVector& v, const Table& r_hat, const Table& weights,
                  const TabularMDP& mdp, double alpha, FDivergence kind) {
    if (weights.rows != mdp.n_states || weights.cols != mdp.n_actions)
        throw std::invalid_argument("lower_loss: weight shape mismatch");
    Table x = scaled_advantage(r_hat, v, mdp, alpha);
    double base = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) base += mdp.initial_dist[s] * v[s];
    base *= 1.0 - mdp.gamma;

    if (kind == FDivergence::KL) return base + alpha * log_expectation_exp(weights, x);

    double conj = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (weights.data[i] > 0.0) conj += weights.data[i] * f_star_eval(kind, x.data[i]);
    }
    return base + alpha * conj;
}

ValueVector lower_gradient(const ValueVector& v, const Table& r_hat, const Table& weights,
                           const TabularMDP& mdp, double alpha, FDivergence kind,
                           const std::vector<char>* v_free) {
    Table x = scaled_advantage(r_hat, v, mdp, alpha);

    // Candidate occupancy induced by the current advantage: softmax weights
    // for KL, weights * f*'(x) for chi^2. The gradient of the dual
    // objective in V is exactly the negated flow residual of it.
    Table g(weights.rows, weights.cols, 0.0);
    if (kind == FDivergence::KL) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] > 0.0 && x.data[i] > m) m = x.data[i];
        }
        double z = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] > 0.0) {
                g.data[i] = weights.data[i] * std::exp(x.data[i] - m);
                z += g.data[i];
            }
        }
        for (double& e : g.data) e /= z;
    } else {
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] > 0.0) g.data[i] = weights.data[i] * f_star_prime(kind, x.data[i]);
        }
    }

    ValueVector res = bellman_flow_residual(mdp, g);
    ValueVector grad(mdp.n_states);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        grad[s] = -res[s];
        if (v_free && !(*v_free)[s]) grad[s] = 0.0;
    }
    return grad;
}

double upper_loss(const RewardCorrection& correction, const ValueVector& v_star,
                  const Table& weights, const RatioTable& ratio, const TabularMDP& mdp,
                  const SolverConfig& config) {
    Table x = scaled_advantage(correction.r_hat(), v_star, mdp, config.alpha);

    double loss = 0.0;
    if (config.divergence == FDivergence::KL) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] > 0.0 && x.data[i] > m) m = x.data[i];
        }
        const double log_clip = std::log(config.exp_clip);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] <= 0.0) continue;
            double e = x.data[i] >= log_clip ? config.exp_clip : std::exp(x.data[i]);
            loss += weights.data[i] * e * (ratio.log_ratio_DE.data[i] + x.data[i] - m);
        }
    } else {
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] <= 0.0) continue;
            // Smoothed expert ratio (dE + eps) / dD, reused from the log.
            double w_eps = std::exp(-ratio.log_ratio_DE.data[i]);
            double psi = f_star_prime(FDivergence::ChiSquared, x.data[i]);
            double t = psi / w_eps - 1.0;
            loss += weights.data[i] * w_eps * 0.5 * t * t;
        }
    }
    if (!finite(loss)) throw std::runtime_error("upper_loss: non-finite value");
    return loss;
}

Table upper_gradient(const RewardCorrection& correction, const ValueVector& v_star,
                     const Table& weights, const RatioTable& ratio, const TabularMDP& mdp,
                     const SolverConfig& config) {
    Table x = scaled_advantage(correction.r_hat(), v_star, mdp, config.alpha);
    const double alpha = config.alpha;

    // d(Adv)/d(raw) through the tanh squashing, per entry.
    Table tau = correction.raw;
    for (double& e : tau.data) {
        double th = std::tanh(e);
        e = correction.bound * (1.0 - th * th);
    }

    Table grad(x.rows, x.cols, 0.0);
    if (config.divergence == FDivergence::KL) {
        double m = -std::numeric_limits<double>::infinity();
        std::size_t argmax = 0;
        bool any = false;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] > 0.0 && (!any || x.data[i] > m)) {
                m = x.data[i];
                argmax = i;
                any = true;
            }
        }
        if (!any) return grad;
        const double log_clip = std::log(config.exp_clip);
        double weighted_exp_sum = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] <= 0.0) continue;
            bool clipped = x.data[i] >= log_clip;
            double e = clipped ? config.exp_clip : std::exp(x.data[i]);
            double e_prime = clipped ? 0.0 : e;
            weighted_exp_sum += weights.data[i] * e;
            grad.data[i] = weights.data[i] *
                           (e_prime * (ratio.log_ratio_DE.data[i] + x.data[i] - m) + e) *
                           tau.data[i] / alpha;
        }
        // The batch max moves with its argmax entry.
        grad.data[argmax] -= weighted_exp_sum * tau.data[argmax] / alpha;
    } else {
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            if (weights.data[i] <= 0.0) continue;
            if (!(x.data[i] + 1.0 > 0.0)) continue;  // flat branch of max(0, x+1)
            double w_eps = std::exp(-ratio.log_ratio_DE.data[i]);
            double psi = x.data[i] + 1.0;
            grad.data[i] = weights.data[i] * (psi / w_eps - 1.0) * tau.data[i] / alpha;
        }
    }
    return grad;
}

double upper_loss_generic(const Table& psi, const Table& w, const Table& weights,
                          FDivergence kind) {
    if (!psi.same_shape(w) || !psi.same_shape(weights))
        throw std::invalid_argument("upper_loss_generic: shape mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < psi.data.size(); ++i) {
        if (weights.data[i] <= 0.0 || w.data[i] <= 0.0) continue;
        loss += weights.data[i] * w.data[i] * f_eval(kind, psi.data[i] / w.data[i]);
    }
    return loss;
}

Table optimal_ratio(const ValueVector& v, const Table& r_hat, const Table& weights,
                    const TabularMDP& mdp, double alpha, FDivergence kind, double exp_clip) {
    Table x = scaled_advantage(r_hat, v, mdp, alpha);
    Table psi(x.rows, x.cols, 0.0);
    if (kind == FDivergence::KL) {
        for (std::size_t i = 0; i < x.data.size(); ++i)
            psi.data[i] = clipped_exp(x.data[i], exp_clip);
        double z = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) z += weights.data[i] * psi.data[i];
        if (!(z > 0.0)) throw std::runtime_error("optimal_ratio: degenerate normalizer");
        for (double& e : psi.data) e /= z;
    } else {
        for (std::size_t i = 0; i < x.data.size(); ++i)
            psi.data[i] = f_star_prime(FDivergence::ChiSquared, x.data[i]);
    }
    return psi;
}

Policy extract_policy(const Table& psi, const Table& d_dataset) {
    if (!psi.same_shape(d_dataset))
        throw std::invalid_argument("extract_policy: shape mismatch");
    Policy pi(d_dataset.rows, d_dataset.cols, 0.0);
    for (std::size_t s = 0; s < d_dataset.rows; ++s) {
        double mass = 0.0;
        for (std::size_t a = 0; a < d_dataset.cols; ++a) {
            pi(s, a) = d_dataset(s, a) * psi(s, a);
            mass += pi(s, a);
        }
        if (mass > 0.0) {
            for (std::size_t a = 0; a < d_dataset.cols; ++a) pi(s, a) /= mass;
        } else {
            for (std::size_t a = 0; a < d_dataset.cols; ++a)
                pi(s, a) = 1.0 / static_cast<double>(d_dataset.cols);
        }
    }
    return pi;
}

double reward_gap(const OccupancyMeasure& policy_occupancy, const Table& d_expert,
                  FDivergence kind, double epsilon) {
    if (!policy_occupancy.same_shape(d_expert))
        throw std::invalid_argument("reward_gap: shape mismatch");
    if (!(epsilon > 0.0)) throw std::invalid_argument("reward_gap: epsilon must be positive");
    Table q = d_expert;
    double total = 0.0;
    for (double& e : q.data) {
        e += epsilon;
        total += e;
    }
    for (double& e : q.data) e /= total;
    return f_divergence(policy_occupancy, q, kind);
}

SolverData prepare_solver_data(const TabularMDP& mdp, const Dataset& dataset_D,
                               const Dataset& dataset_E, const SolverConfig& config) {
    validate_solver_config(config);
    if (std::abs(mdp.gamma - config.gamma) > 1e-12)
        throw std::invalid_argument("prepare_solver_data: config.gamma differs from mdp.gamma");
    if (dataset_D.transitions.empty() || dataset_E.transitions.empty())
        throw std::invalid_argument("prepare_solver_data: datasets must be nonempty");

    SolverData data;
    data.mdp = &mdp;
    data.merged = merge_datasets(dataset_E, dataset_D);
    data.reward_stats = normalize_rewards(data.merged);
    data.d_dataset = empirical_distribution(mdp, data.merged, config.distribution_mode, mdp.gamma);
    data.d_expert = empirical_distribution(mdp, dataset_E, config.distribution_mode, mdp.gamma);
    data.ratio = tabular_ratio(data.d_expert, data.d_dataset, config.ratio_epsilon);

    // In the tabular setting the observed reward is a function of (s,a);
    // collect it into a table (first occurrence wins, all agree).
    data.r_tilde = Table(mdp.n_states, mdp.n_actions, 0.0);
    std::vector<char> seen(mdp.n_states * mdp.n_actions, 0);
    for (const Transition& tr : data.merged.transitions) {
        std::size_t i = tr.s * mdp.n_actions + tr.a;
        if (!seen[i]) {
            data.r_tilde.data[i] = tr.r_tilde;
            seen[i] = 1;
        }
    }

    data.v_free.assign(mdp.n_states, 0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            if (data.d_dataset(s, a) > 0.0) {
                data.v_free[s] = 1;
                break;
            }
        }
    }
    for (std::size_t i = 0; i < data.d_dataset.data.size(); ++i) {
        if (data.d_dataset.data[i] <= 0.0) continue;
        if (data.d_expert.data[i] > 0.0)
            data.expert_entries.push_back(i);
        else
            data.other_entries.push_back(i);
    }
    return data;
}

double mean_correction(const RewardCorrection& correction, const std::vector<std::size_t>& entries) {
    if (entries.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i : entries) acc += correction.bound * std::tanh(correction.raw.data[i]);
    return acc / static_cast<double>(entries.size());
}

namespace {

double lr_dr_at(const SolverConfig& config, std::size_t iter) {
    if (config.lr_dr_schedule == LrSchedule::Constant) return config.lr_dr;
    double progress = config.iterations == 0
                          ? 0.0
                          : static_cast<double>(iter) / static_cast<double>(config.iterations);
    return config.lr_dr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void append_history(SolverState& state, const SolverData& data, const SolverConfig& config) {
    const TabularMDP& mdp = *data.mdp;
    Table r_hat = state.correction.r_hat();
    HistoryRecord rec;
    rec.iter = state.iter;
    rec.lower_loss = lower_loss(state.v, r_hat, data.d_dataset, mdp, config.alpha, config.divergence);
    rec.upper_loss =
        upper_loss(state.correction, state.v, data.d_dataset, data.ratio, mdp, config);
    Table psi = optimal_ratio(state.v, r_hat, data.d_dataset, mdp, config.alpha,
                              config.divergence, config.exp_clip);
    Policy pi = extract_policy(psi, data.d_dataset);
    OccupancyMeasure occ = transient_occupancy(mdp, occupancy_of_policy(mdp, pi));
    rec.reward_gap = reward_gap(occ, data.d_expert, config.divergence);
    rec.dr_mean_expert = mean_correction(state.correction, data.expert_entries);
    rec.dr_mean_other = mean_correction(state.correction, data.other_entries);
    if (!finite(rec.lower_loss) || !finite(rec.upper_loss) || !finite(rec.reward_gap))
        throw std::runtime_error("solver diverged at iteration " + std::to_string(rec.iter) +
                                 ": lower=" + std::to_string(rec.lower_loss) +
                                 " upper=" + std::to_string(rec.upper_loss) +
                                 " gap=" + std::to_string(rec.reward_gap));
    state.history.push_back(rec);
    if (rec.reward_gap < state.best_gap) {
        state.best_gap = rec.reward_gap;
        state.best_iter = rec.iter;
        state.best_v = state.v;
        state.best_raw = state.correction.raw;
    }
}

/// Empirical batch distribution: the full dataset distribution, or a
/// uniformly drawn minibatch (Discounted mode weights draws by gamma^t).
Table batch_weights(SolverState& state, const SolverData& data, const SolverConfig& config) {
    if (config.batch_size == 0) return data.d_dataset;
    const TabularMDP& mdp = *data.mdp;
    Table u(mdp.n_states, mdp.n_actions, 0.0);
    double total = 0.0;
    std::size_t n = data.merged.transitions.size();
    for (std::size_t k = 0; k < config.batch_size; ++k) {
        const Transition& tr = data.merged.transitions[state.rng.uniform_below(n)];
        double w = config.distribution_mode == WeightMode::Sampling
                       ? 1.0
                       : std::pow(mdp.gamma, static_cast<double>(tr.t));
        u(tr.s, tr.a) += w;
        total += w;
    }
    for (double& e : u.data) e /= total;
    return u;
}

}  // namespace

void two_timescale_step(SolverState& state, const SolverData& data, const SolverConfig& config) {
    const TabularMDP& mdp = *data.mdp;
    Table u = batch_weights(state, data, config);

    Table r_hat = state.correction.r_hat();
    ValueVector grad_v =
        lower_gradient(state.v, r_hat, u, mdp, config.alpha, config.divergence, &data.v_free);
    for (std::size_t s = 0; s < mdp.n_states; ++s) state.v[s] -= config.lr_v * grad_v[s];

    if (config.lr_dr > 0.0) {
        Table grad_raw =
            upper_gradient(state.correction, state.v, u, data.ratio, mdp, config);
        double lr = lr_dr_at(config, state.iter);
        for (std::size_t i = 0; i < grad_raw.data.size(); ++i)
            state.correction.raw.data[i] -= lr * grad_raw.data[i];
    }

    // Stabilizer ordering from the refreshed advantage: the batch max may
    // never exceed the dataset max, which the raw log-sum-exp dominates.
    Table x = scaled_advantage(state.correction.r_hat(), state.v, mdp, config.alpha);
    double m_batch = -std::numeric_limits<double>::infinity();
    double m_full = -std::numeric_limits<double>::infinity();
    double sum_exp_shift = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (u.data[i] > 0.0 && x.data[i] > m_batch) m_batch = x.data[i];
        if (data.d_dataset.data[i] > 0.0 && x.data[i] > m_full) m_full = x.data[i];
    }
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (data.d_dataset.data[i] > 0.0) sum_exp_shift += std::exp(x.data[i] - m_full);
    }
    double lse_full = m_full + std::log(sum_exp_shift);
    bool chain_ok = m_batch <= m_full + BOUND_CHAIN_TOL && m_full <= lse_full + BOUND_CHAIN_TOL;
    assert(chain_ok);
    if (!chain_ok) ++state.bound_chain_violations;

    ++state.iter;
    if (state.iter % config.log_every == 0) append_history(state, data, config);
}

SolverState solve(const TabularMDP& mdp, const Dataset& dataset_D, const Dataset& dataset_E,
                  const SolverConfig& config) {
    SolverData data = prepare_solver_data(mdp, dataset_D, dataset_E, config);

    SolverState state;
    state.v.assign(mdp.n_states, 0.0);
    state.correction.raw = Table(mdp.n_states, mdp.n_actions, 0.0);
    state.correction.bound = config.correction_bound;
    state.correction.r_tilde = data.r_tilde;
    state.rng = Rng(config.seed);

    append_history(state, data, config);
    for (std::size_t i = 0; i < config.iterations; ++i) two_timescale_step(state, data, config);
    if (state.history.back().iter != state.iter) append_history(state, data, config);
    return state;
}

}  // namespace rgm
