#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "rgm/dataset.hpp"
#include "rgm/divergence.hpp"
#include "rgm/mdp.hpp"
#include "rgm/rng.hpp"
#include "rgm/table.hpp"

namespace rgm {

/**
 * Learnable reward correction. The raw parameters are unconstrained; the
 * effective correction is bound * tanh(raw), so |delta_r| < bound always.
 * r_tilde is the observed (normalized) reward as a function of (s,a); the
 * corrected reward is r_hat = r_tilde + delta_r.
 */
struct RewardCorrection {
    Table raw;
    double bound = 3.0;
    Table r_tilde;

    Table delta_r() const;
    Table r_hat() const;
};

enum class LrSchedule { Constant, Cosine };

struct SolverConfig {
    double alpha = 0.5;
    double gamma = 0.99;  // must match the MDP's discount
    FDivergence divergence = FDivergence::KL;
    double lr_v = 0.1;
    double lr_dr = 1e-3;  // must stay well below lr_v (two-timescale)
    LrSchedule lr_dr_schedule = LrSchedule::Constant;
    std::size_t iterations = 400000;
    std::size_t batch_size = 0;  // 0 = full batch
    double exp_clip = 100.0;
    double ratio_epsilon = 1e-8;
    WeightMode distribution_mode = WeightMode::Sampling;
    double correction_bound = 3.0;
    std::size_t log_every = 500;
    std::uint64_t seed = 0;
};

/// Throws std::invalid_argument on out-of-range settings.
void validate_solver_config(const SolverConfig& config);

/// One logged optimization record (full-batch quantities).
struct HistoryRecord {
    std::size_t iter = 0;
    double lower_loss = 0.0;
    double upper_loss = 0.0;
    double reward_gap = 0.0;
    double dr_mean_expert = 0.0;
    double dr_mean_other = 0.0;
};

/**
 * Everything a solve run precomputes once: the merged normalized dataset,
 * the empirical distributions, importance ratios, and which states carry
 * dataset mass. V stays pinned at 0 on states outside the dataset's state
 * support (for episodic tasks that is the absorbing terminal, which the
 * dataset never leaves); this is the tabular form of masking values at
 * terminal next-states.
 */
struct SolverData {
    const TabularMDP* mdp = nullptr;
    Dataset merged;  // expert transitions first, rewards normalized
    Table d_dataset;
    Table d_expert;
    RatioTable ratio;
    Table r_tilde;
    std::vector<char> v_free;  // per state: 1 when V may move
    std::vector<std::size_t> expert_entries;  // flat indices: dD>0 and dE>0
    std::vector<std::size_t> other_entries;   // flat indices: dD>0 and dE=0
    NormalizationStats reward_stats;
};

SolverData prepare_solver_data(const TabularMDP& mdp, const Dataset& dataset_D,
                               const Dataset& dataset_E, const SolverConfig& config);

struct SolverState {
    ValueVector v;
    RewardCorrection correction;
    std::size_t iter = 0;
    std::vector<HistoryRecord> history;
    /// Checkpoint with the lowest recorded training reward gap, snapshotted at
    /// history-record granularity. The policy the pipeline extracts comes from
    /// here; the reward tables come from the final iterate.
    ValueVector best_v;
    Table best_raw;
    std::size_t best_iter = 0;
    double best_gap = std::numeric_limits<double>::infinity();
    /// Steps where max_batch <= max_full <= logsumexp_full failed (should
    /// stay 0; counted so tests can assert it cheaply).
    std::size_t bound_chain_violations = 0;
    Rng rng{0};
};

/// Adv(s,a) = r_hat(s,a) + gamma (T V)(s,a) - V(s).
Table advantage(const Table& r_hat, const ValueVector& v, const TabularMDP& mdp);

/**
 * Dual objective of the inner pessimistic problem:
 *   (1-gamma) E_mu0[V] + alpha E_w[f*(Adv/alpha)],
 * where `weights` is a normalized distribution over (s,a) (the dataset
 * distribution, or a minibatch estimate of it). The KL instance uses the
 * simplex-restricted conjugate log E_w[exp(Adv/alpha)].
 */
double lower_loss(const ValueVector& v, const Table& r_hat, const Table& weights,
                  const TabularMDP& mdp, double alpha, FDivergence kind);

/**
 * Exact gradient of lower_loss in V. For both divergences it equals the
 * negated Bellman flow residual of g(s,a) = weights * psi_candidate, where
 * the candidate ratio is the softmax weight (KL) or f*'(Adv/alpha) (chi^2).
 * States with v_free[s] == 0 get a zero gradient when a mask is supplied.
 */
ValueVector lower_gradient(const ValueVector& v, const Table& r_hat, const Table& weights,
                           const TabularMDP& mdp, double alpha, FDivergence kind,
                           const std::vector<char>* v_free = nullptr);

/**
 * Upper-level loss in the correction parameters.
 * KL (default) uses the batch-stabilized practical form
 *   E_w[clip(exp(Adv/alpha)) * (log_ratio_DE + Adv/alpha - max_batch(Adv/alpha))],
 * chi^2 the ratio-matching form E_w[w_eps * f(psi / w_eps)] with the
 * smoothed expert ratio w_eps = exp(-log_ratio_DE) and psi = max(0, Adv/alpha + 1).
 */
double upper_loss(const RewardCorrection& correction, const ValueVector& v_star,
                  const Table& weights, const RatioTable& ratio, const TabularMDP& mdp,
                  const SolverConfig& config);

/// Exact gradient of upper_loss w.r.t. the raw correction parameters,
/// including the tanh squashing, the exp clip, and the batch-max coupling.
Table upper_gradient(const RewardCorrection& correction, const ValueVector& v_star,
                     const Table& weights, const RatioTable& ratio, const TabularMDP& mdp,
                     const SolverConfig& config);

/// Reference form E_w[w * f(psi / w)] over entries with w > 0 and weight > 0.
/// Test oracle only; the practical forms above are the training objectives.
double upper_loss_generic(const Table& psi, const Table& w, const Table& weights,
                          FDivergence kind);

/**
 * Occupancy ratio recovered from the advantage: psi = f*'(Adv/alpha).
 * The KL path exponentiates (clipped at exp_clip) and self-normalizes so
 * that E_weights[psi] = 1; chi^2 returns max(0, Adv/alpha + 1) directly.
 */
Table optimal_ratio(const ValueVector& v, const Table& r_hat, const Table& weights,
                    const TabularMDP& mdp, double alpha, FDivergence kind, double exp_clip);

/// Weighted behavior cloning in closed form: pi(a|s) proportional to
/// d_dataset(s,a) * psi(s,a); zero-mass states fall back to uniform.
Policy extract_policy(const Table& psi, const Table& d_dataset);

/**
 * D_f(d_pi || d_expert) with the expert distribution epsilon-smoothed (and
 * renormalized) so the value stays finite off the expert support. Callers
 * pass the occupancy restricted to the states they want compared (see
 * transient_occupancy for episodic tasks).
 */
double reward_gap(const OccupancyMeasure& policy_occupancy, const Table& d_expert,
                  FDivergence kind, double epsilon = 1e-8);

/**
 * One two-timescale update: a V step against lower_loss followed by a raw
 * correction step against upper_loss, both on the same batch (full-batch
 * when config.batch_size == 0). Appends a history record every
 * config.log_every steps. Throws std::runtime_error when a logged loss
 * turns non-finite.
 */
void two_timescale_step(SolverState& state, const SolverData& data, const SolverConfig& config);

/**
 * Full optimization: merges expert data into the dataset, normalizes
 * rewards, precomputes distributions and ratios, then runs
 * config.iterations two-timescale steps from V = 0, raw correction = 0.
 */
SolverState solve(const TabularMDP& mdp, const Dataset& dataset_D, const Dataset& dataset_E,
                  const SolverConfig& config);

/// min(exp(x), clip); asserts the result never exceeds the clip.
double clipped_exp(double x, double clip);

/// Mean of delta_r over the given flat entry indices (0 for an empty set).
double mean_correction(const RewardCorrection& correction, const std::vector<std::size_t>& entries);

}  // namespace rgm
