#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rgm/dataset.hpp"
#include "rgm/envs.hpp"
#include "rgm/oracle.hpp"
#include "rgm/solver.hpp"
#include "rgm/table.hpp"

namespace rgm {

enum class EnvKind { GridWorld, RandomWalk };

std::string env_kind_name(EnvKind kind);
EnvKind env_kind_from_name(const std::string& name);

/// How behavior (non-expert) episodes are generated.
enum class BehaviorKind {
    Random,  // uniform policy
    Mixture  // expert_mix * scripted expert + (1 - expert_mix) * uniform
};

std::string behavior_kind_name(BehaviorKind kind);
BehaviorKind behavior_kind_from_name(const std::string& name);

enum class ExpertSource { Scripted, File };

struct DatasetSpec {
    std::size_t n_episodes = 1000;
    std::size_t horizon = 100;
    BehaviorKind behavior = BehaviorKind::Random;
    double expert_mix = 0.75;  // Mixture only
};

struct ExpertSpec {
    std::size_t n_trajectories = 1;
    ExpertSource source = ExpertSource::Scripted;
    std::string file;  // File source: CSV in the write_dataset_csv format
    /// Roll demonstrations from uniform starts over non-absorbing states
    /// instead of the environment's initial distribution.
    bool uniform_start = false;
};

/**
 * One full experiment: environment + reward corruption + datasets + solver.
 * `seed` drives every random stream of the run (corruption, behavior
 * rollouts, expert rollouts, solver batches) through fixed per-stream
 * derivations, so a (config, seed) pair reproduces the run bit for bit.
 * config.reward.seed and config.solver.seed are overridden by those
 * derivations. An empty output_dir falls back to the RGM_OUTPUT_DIR
 * environment variable and then to "rgm-output".
 */
struct ExperimentConfig {
    EnvKind env = EnvKind::GridWorld;
    GridWorldSpec grid;
    RandomWalkSpec walk;
    ImperfectRewardSpec reward;
    DatasetSpec dataset;
    ExpertSpec expert;
    SolverConfig solver;
    std::string output_dir;
    std::uint64_t seed = 0;
};

struct ExperimentResult {
    SolverState state;
    double goal_reach_rate = 0.0;
    double reward_gap_initial = 0.0;
    double reward_gap_final = 0.0;
    double dr_mean_expert_final = 0.0;
    double dr_mean_other_final = 0.0;
    double true_fire_mass = 0.0;  // grid world only
    double fake_fire_mass = 0.0;  // grid world only
    std::string output_dir;       // resolved directory the artifacts went to
};

/**
 * Runs the experiment and writes metrics.jsonl, r_hat.csv, delta_r.csv,
 * psi.csv, occupancy.csv, policy.csv, and summary.json into the resolved
 * output directory. CSV matrices are states x actions; occupancy.csv holds
 * the raw occupancy of the extracted policy while the fire-mass summary
 * fields aggregate its transient (non-absorbing, renormalized) part.
 * Throws std::invalid_argument for config errors and std::runtime_error
 * for numerical or IO failures.
 */
ExperimentResult run_experiment(const ExperimentConfig& config);

/**
 * Fraction of `from_states` from which following argmax_a r_hat(s,a) under
 * the most likely transition reaches `target` within step_budget steps.
 * Deterministic; revisiting a state counts as failure (the walk loops).
 */
double greedy_reach_rate(const TabularMDP& mdp, const Table& r_hat,
                         const std::vector<std::size_t>& from_states, std::size_t target,
                         std::size_t step_budget);

/// Distinct source states appearing in the dataset, ascending.
std::vector<std::size_t> visited_states(const Dataset& data);

struct DualityRow {
    std::size_t instance_id = 0;
    double alpha = 0.0;
    FDivergence kind = FDivergence::KL;
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;           // |primal - dual|
    double flow_residual = 0.0;
};

struct DualityReport {
    std::vector<DualityRow> rows;
    double max_gap = 0.0;
    double max_flow_residual = 0.0;
    bool ok = true;  // all gaps and residuals within tolerance
};

/**
 * Sweeps n_instances random oracle instances; each instance is solved for
 * alpha in {0.1, 0.5, 2} under both divergences. When csv_path is nonempty
 * the rows are written as CSV with the header
 * instance_id,alpha,kind,primal,dual,gap,flow_residual.
 */
DualityReport run_duality_check(std::size_t n_instances, std::uint64_t seed, double gap_tolerance,
                                double flow_tolerance, const std::string& csv_path);

enum class HeatmapFormat { Csv, Pgm };

/**
 * Writes a table as CSV (full precision) or as an ASCII PGM image with
 * linear min-max scaling to 0..255 (a constant table maps to 0). The PGM
 * comment line records the scaling.
 */
void emit_heatmap(const Table& table, HeatmapFormat format, const std::string& path);

/// Writes a table as CSV rows with full round-trip precision.
void write_csv_table(const Table& table, const std::string& path);

/// Reads a rectangular CSV of doubles as written by write_csv_table.
Table read_csv_table(const std::string& path);

}  // namespace rgm
