#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rgm/mdp.hpp"
#include "rgm/rng.hpp"
#include "rgm/table.hpp"

namespace rgm {

/// One logged environment step. r_tilde is the observed (possibly corrupted,
/// possibly normalized) reward, t the step index within its episode.
struct Transition {
    std::size_t s = 0;
    std::size_t a = 0;
    double r_tilde = 0.0;
    std::size_t s_next = 0;
    std::size_t t = 0;
    bool done = false;
};

struct Dataset {
    std::vector<Transition> transitions;
    /// Index of the first transition of each episode; strictly increasing,
    /// starts at 0 when nonempty.
    std::vector<std::size_t> episode_starts;
    std::string source_mdp_id;

    std::size_t n_episodes() const { return episode_starts.size(); }
};

/// Throws std::invalid_argument when episode bookkeeping is inconsistent.
void validate_dataset(const Dataset& data);

/**
 * Simulates n_episodes rollouts of pi under the given reward table.
 * An episode ends when the agent enters an absorbing state or after
 * `horizon` steps; the transition entering the absorbing state is recorded
 * with done = true, transitions out of absorbing states are never recorded.
 */
Dataset rollout(const TabularMDP& mdp, const Policy& pi, const Table& reward,
                std::size_t n_episodes, std::size_t horizon, Rng& rng);

/// Concatenates two datasets, expert transitions first.
Dataset merge_datasets(const Dataset& expert, const Dataset& rest);

/// How dataset transitions are weighted when estimating a distribution.
enum class WeightMode { Sampling, Discounted };

/// Normalized state-action distribution over the dataset. Sampling mode
/// weights every transition equally; Discounted weights it by gamma^t.
Table empirical_distribution(const TabularMDP& mdp, const Dataset& data, WeightMode mode,
                             double gamma);

/**
 * Importance ratios between an expert distribution dE and a dataset
 * distribution dD over the same table shape.
 *   w            = dE / dD on the support of dD, 0 where dD = 0;
 *   log_ratio_DE = log(dD / (dE + epsilon)) on the support of dD, 0 elsewhere.
 * Only the log ratio is smoothed; w itself is exact.
 */
struct RatioTable {
    Table w;
    Table log_ratio_DE;
    double epsilon = 1e-8;
};

RatioTable tabular_ratio(const Table& d_expert, const Table& d_dataset, double epsilon = 1e-8);

/**
 * Same ratios through the optimal-discriminator identity: the Bayes
 * classifier between dD and dE is h(s,a) = dD / (dD + dE), and
 * w = 1/h - 1. Agrees with tabular_ratio exactly on the support of dD.
 */
RatioTable discriminator_ratio(const Table& d_expert, const Table& d_dataset,
                               double epsilon = 1e-8);

struct NormalizationStats {
    double mean = 0.0;
    double stddev = 0.0;  // population std; 0 when all rewards are equal
};

/**
 * Standardizes r_tilde across the dataset in place: r <- (r - mean) / std
 * using the population standard deviation. When all rewards are equal the
 * result is identically 0. Returns the statistics used.
 */
NormalizationStats normalize_rewards(Dataset& data);

/// Writes `episode,t,s,a,r_tilde,s_next,done` rows; rewards keep full
/// precision so a round trip is exact.
void write_dataset_csv(const Dataset& data, const std::string& path);

/// Reads the CSV format written by write_dataset_csv.
Dataset read_dataset_csv(const std::string& path);

}  // namespace rgm
