#include "rgm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rgm {

namespace {

// splitmix64 finalizer; derives independent per-stream seeds from the run
// seed so every random source of an experiment is pinned by (config, seed).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t STREAM_REWARD = 1;
constexpr std::uint64_t STREAM_BEHAVIOR = 2;
constexpr std::uint64_t STREAM_EXPERT = 3;
constexpr std::uint64_t STREAM_SOLVER = 4;

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("run_experiment: cannot open " + path);
    return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("run_experiment: write failed for " + path);
}

Policy mixture_policy(const Policy& expert, const Policy& uniform, double expert_mix) {
    Policy pi(expert.rows, expert.cols);
    for (std::size_t i = 0; i < pi.size(); ++i)
        pi.data[i] = expert_mix * expert.data[i] + (1.0 - expert_mix) * uniform.data[i];
    return pi;
}

double occupancy_mass_at_state(const OccupancyMeasure& occ, std::size_t s) {
    double total = 0.0;
    for (std::size_t a = 0; a < occ.cols; ++a) total += occ(s, a);
    return total;
}

}  // namespace

std::string env_kind_name(EnvKind kind) {
    switch (kind) {
        case EnvKind::GridWorld: return "gridworld";
        case EnvKind::RandomWalk: return "randomwalk";
    }
    throw std::invalid_argument("env_kind_name: unknown kind");
}

EnvKind env_kind_from_name(const std::string& name) {
    if (name == "gridworld") return EnvKind::GridWorld;
    if (name == "randomwalk") return EnvKind::RandomWalk;
    throw std::invalid_argument("env_kind_from_name: unknown environment " + name);
}

std::string behavior_kind_name(BehaviorKind kind) {
    switch (kind) {
        case BehaviorKind::Random: return "random";
        case BehaviorKind::Mixture: return "mixture";
    }
    throw std::invalid_argument("behavior_kind_name: unknown kind");
}

BehaviorKind behavior_kind_from_name(const std::string& name) {
    if (name == "random") return BehaviorKind::Random;
    if (name == "mixture") return BehaviorKind::Mixture;
    throw std::invalid_argument("behavior_kind_from_name: unknown behavior " + name);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    validate_solver_config(config.solver);
    if (config.dataset.n_episodes == 0)
        throw std::invalid_argument("run_experiment: dataset needs at least one episode");
    if (config.dataset.horizon == 0)
        throw std::invalid_argument("run_experiment: horizon must be positive");
    if (config.dataset.behavior == BehaviorKind::Mixture &&
        (config.dataset.expert_mix < 0.0 || config.dataset.expert_mix > 1.0))
        throw std::invalid_argument("run_experiment: expert_mix must lie in [0, 1]");

    TabularMDP mdp;
    Table base_reward;
    Policy expert_pi;
    std::size_t target = 0;
    std::size_t step_budget = 0;  // twice the state-space diameter
    if (config.env == EnvKind::GridWorld) {
        mdp = build_gridworld(config.grid, config.solver.gamma);
        bool fire_penalty = config.reward.variant == RewardVariant::FirePenalty;
        base_reward = gridworld_base_reward(mdp, config.grid, fire_penalty);
        expert_pi = scripted_expert_policy(mdp, config.grid);
        target = cell_index(config.grid, config.grid.goal);
        step_budget = 2 * (config.grid.width + config.grid.height - 2);
    } else {
        mdp = build_randomwalk(config.walk, config.solver.gamma);
        base_reward = randomwalk_base_reward(mdp, config.walk);
        expert_pi = randomwalk_expert_policy(mdp, config.walk);
        target = config.walk.n_state_bins;  // the absorbing goal state
        step_budget = 2 * config.walk.n_state_bins;
    }

    ImperfectRewardSpec reward_spec = config.reward;
    reward_spec.seed = derive_seed(config.seed, STREAM_REWARD);
    Table r_observed = apply_imperfect_reward(base_reward, reward_spec);

    Policy behavior = uniform_policy(mdp);
    if (config.dataset.behavior == BehaviorKind::Mixture)
        behavior = mixture_policy(expert_pi, behavior, config.dataset.expert_mix);

    Rng behavior_rng(derive_seed(config.seed, STREAM_BEHAVIOR));
    Dataset dataset_D = rollout(mdp, behavior, r_observed, config.dataset.n_episodes,
                                config.dataset.horizon, behavior_rng);

    Dataset dataset_E;
    if (config.expert.source == ExpertSource::Scripted) {
        if (config.expert.n_trajectories == 0)
            throw std::invalid_argument("run_experiment: expert needs at least one trajectory");
        Rng expert_rng(derive_seed(config.seed, STREAM_EXPERT));
        TabularMDP expert_mdp = mdp;
        if (config.expert.uniform_start) {
            std::size_t n_live = 0;
            for (std::size_t s = 0; s < mdp.n_states; ++s)
                if (!is_absorbing_state(mdp, s)) ++n_live;
            if (n_live == 0)
                throw std::invalid_argument("run_experiment: no non-absorbing start states");
            for (std::size_t s = 0; s < mdp.n_states; ++s)
                expert_mdp.initial_dist[s] =
                    is_absorbing_state(mdp, s) ? 0.0 : 1.0 / static_cast<double>(n_live);
        }
        dataset_E = rollout(expert_mdp, expert_pi, r_observed, config.expert.n_trajectories,
                            config.dataset.horizon, expert_rng);
    } else {
        if (config.expert.file.empty())
            throw std::invalid_argument("run_experiment: expert file source needs a path");
        dataset_E = read_dataset_csv(config.expert.file);
        if (dataset_E.source_mdp_id.empty()) dataset_E.source_mdp_id = mdp.id;
    }

    SolverConfig solver_config = config.solver;
    solver_config.seed = derive_seed(config.seed, STREAM_SOLVER);
    SolverState state = solve(mdp, dataset_D, dataset_E, solver_config);

    SolverData data = prepare_solver_data(mdp, dataset_D, dataset_E, solver_config);
    Table r_hat = state.correction.r_hat();
    Table delta_r = state.correction.delta_r();
    // Reward tables come from the final iterate; the deployed policy comes
    // from the checkpoint with the lowest recorded training reward gap.
    RewardCorrection best_correction{state.best_raw, solver_config.correction_bound, data.r_tilde};
    Table psi = optimal_ratio(state.best_v, best_correction.r_hat(), data.d_dataset, mdp,
                              solver_config.alpha, solver_config.divergence,
                              solver_config.exp_clip);
    Policy pi = extract_policy(psi, data.d_dataset);
    OccupancyMeasure occupancy = occupancy_of_policy(mdp, pi);
    OccupancyMeasure occupancy_t = transient_occupancy(mdp, occupancy);

    ExperimentResult result;
    result.goal_reach_rate =
        greedy_reach_rate(mdp, r_hat, visited_states(data.merged), target, step_budget);
    if (state.history.empty())
        throw std::runtime_error("run_experiment: solver produced no history");
    result.reward_gap_initial = state.history.front().reward_gap;
    result.reward_gap_final = state.history.back().reward_gap;
    result.dr_mean_expert_final = state.history.back().dr_mean_expert;
    result.dr_mean_other_final = state.history.back().dr_mean_other;
    if (config.env == EnvKind::GridWorld) {
        for (const Cell& c : config.grid.true_fires)
            result.true_fire_mass += occupancy_mass_at_state(occupancy_t, cell_index(config.grid, c));
        for (const Cell& c : config.grid.fake_fires)
            result.fake_fire_mass += occupancy_mass_at_state(occupancy_t, cell_index(config.grid, c));
    }

    std::string out_dir = config.output_dir;
    if (out_dir.empty()) {
        const char* env_dir = std::getenv("RGM_OUTPUT_DIR");
        out_dir = (env_dir != nullptr && env_dir[0] != '\0') ? env_dir : "rgm-output";
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw std::runtime_error("run_experiment: cannot create " + out_dir + ": " + ec.message());
    result.output_dir = out_dir;

    {
        std::string path = out_dir + "/metrics.jsonl";
        std::ofstream out = open_output(path);
        for (const HistoryRecord& rec : state.history) {
            nlohmann::json row = {
                {"iter", rec.iter},
                {"lower_loss", rec.lower_loss},
                {"upper_loss", rec.upper_loss},
                {"reward_gap", rec.reward_gap},
                {"dr_mean_expert", rec.dr_mean_expert},
                {"dr_mean_other", rec.dr_mean_other},
            };
            out << row.dump() << '\n';
        }
        finish_output(out, path);
    }

    write_csv_table(r_hat, out_dir + "/r_hat.csv");
    write_csv_table(delta_r, out_dir + "/delta_r.csv");
    write_csv_table(psi, out_dir + "/psi.csv");
    write_csv_table(occupancy, out_dir + "/occupancy.csv");
    write_csv_table(pi, out_dir + "/policy.csv");
    Table v_col(mdp.n_states, 1);
    for (std::size_t s = 0; s < mdp.n_states; ++s) v_col(s, 0) = state.v[s];
    write_csv_table(v_col, out_dir + "/v.csv");

    {
        nlohmann::json summary = {
            {"schema_version", 1},
            {"deterministic", true},
            {"env", env_kind_name(config.env)},
            {"reward_variant", reward_variant_name(config.reward.variant)},
            {"seed", config.seed},
            {"iterations", solver_config.iterations},
            {"goal_reach_rate", result.goal_reach_rate},
            {"reward_gap_initial", result.reward_gap_initial},
            {"reward_gap_final", result.reward_gap_final},
            {"reward_gap_best", state.best_gap},
            {"checkpoint_iter", state.best_iter},
            {"dr_mean_expert_final", result.dr_mean_expert_final},
            {"dr_mean_other_final", result.dr_mean_other_final},
            {"reward_normalization",
             {{"mean", data.reward_stats.mean}, {"stddev", data.reward_stats.stddev}}},
        };
        if (config.env == EnvKind::GridWorld)
            summary["fire_mass"] = {{"true_fire_mass", result.true_fire_mass},
                                    {"fake_fire_mass", result.fake_fire_mass}};
        std::string path = out_dir + "/summary.json";
        std::ofstream out = open_output(path);
        out << summary.dump(2) << '\n';
        finish_output(out, path);
    }

    result.state = std::move(state);
    return result;
}

double greedy_reach_rate(const TabularMDP& mdp, const Table& r_hat,
                         const std::vector<std::size_t>& from_states, std::size_t target,
                         std::size_t step_budget) {
    if (r_hat.rows != mdp.n_states || r_hat.cols != mdp.n_actions)
        throw std::invalid_argument("greedy_reach_rate: reward shape mismatch");
    if (target >= mdp.n_states) throw std::invalid_argument("greedy_reach_rate: target out of range");
    if (from_states.empty()) return 0.0;

    std::size_t reached = 0;
    std::vector<char> seen(mdp.n_states);
    for (std::size_t s0 : from_states) {
        if (s0 >= mdp.n_states)
            throw std::invalid_argument("greedy_reach_rate: start state out of range");
        std::fill(seen.begin(), seen.end(), 0);
        std::size_t s = s0;
        for (std::size_t step = 0; step <= step_budget; ++step) {
            if (s == target) {
                ++reached;
                break;
            }
            if (seen[s]) break;
            seen[s] = 1;
            std::size_t best_a = 0;
            for (std::size_t a = 1; a < mdp.n_actions; ++a)
                if (r_hat(s, a) > r_hat(s, best_a)) best_a = a;
            std::size_t best_next = 0;
            double best_p = -1.0;
            for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
                double p = mdp.prob(s, best_a, s2);
                if (p > best_p) {
                    best_p = p;
                    best_next = s2;
                }
            }
            s = best_next;
        }
    }
    return static_cast<double>(reached) / static_cast<double>(from_states.size());
}

std::vector<std::size_t> visited_states(const Dataset& data) {
    std::set<std::size_t> states;
    for (const Transition& tr : data.transitions) states.insert(tr.s);
    return std::vector<std::size_t>(states.begin(), states.end());
}

DualityReport run_duality_check(std::size_t n_instances, std::uint64_t seed, double gap_tolerance,
                                double flow_tolerance, const std::string& csv_path) {
    if (gap_tolerance <= 0.0 || flow_tolerance <= 0.0)
        throw std::invalid_argument("run_duality_check: tolerances must be positive");

    const double alphas[] = {0.1, 0.5, 2.0};
    const FDivergence kinds[] = {FDivergence::KL, FDivergence::ChiSquared};

    DualityReport report;
    Rng rng(seed);
    for (std::size_t i = 0; i < n_instances; ++i) {
        OracleInstance instance = random_instance(rng);
        for (double alpha : alphas) {
            for (FDivergence kind : kinds) {
                DualSolution dual = dual_solve_high_precision(instance.mdp, instance.r_hat,
                                                              instance.d_dataset, alpha, kind);
                PrimalSolution primal = primal_from_dual(dual.v_star, instance.r_hat,
                                                         instance.d_dataset, instance.mdp, alpha, kind);
                DualityRow row;
                row.instance_id = i;
                row.alpha = alpha;
                row.kind = kind;
                row.primal = primal.objective;
                row.dual = dual.dual_value;
                row.gap = std::abs(primal.objective - dual.dual_value);
                row.flow_residual = primal.flow_residual;
                report.max_gap = std::max(report.max_gap, row.gap);
                report.max_flow_residual = std::max(report.max_flow_residual, row.flow_residual);
                report.rows.push_back(row);
            }
        }
    }
    report.ok = report.max_gap <= gap_tolerance && report.max_flow_residual <= flow_tolerance;

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("run_duality_check: cannot open " + csv_path);
        out.precision(std::numeric_limits<double>::max_digits10);
        out << "instance_id,alpha,kind,primal,dual,gap,flow_residual\n";
        for (const DualityRow& row : report.rows)
            out << row.instance_id << ',' << row.alpha << ',' << divergence_name(row.kind) << ','
                << row.primal << ',' << row.dual << ',' << row.gap << ',' << row.flow_residual
                << '\n';
        out.flush();
        if (!out) throw std::runtime_error("run_duality_check: write failed for " + csv_path);
    }
    return report;
}

void emit_heatmap(const Table& table, HeatmapFormat format, const std::string& path) {
    if (format == HeatmapFormat::Csv) {
        write_csv_table(table, path);
        return;
    }
    if (table.size() == 0) throw std::invalid_argument("emit_heatmap: empty table");

    double lo = table.data[0];
    double hi = table.data[0];
    for (double v : table.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit_heatmap: cannot open " + path);
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "P2\n# linear min-max scale: min=" << lo << " max=" << hi << "\n"
        << table.cols << ' ' << table.rows << "\n255\n";
    double span = hi - lo;
    for (std::size_t r = 0; r < table.rows; ++r) {
        for (std::size_t c = 0; c < table.cols; ++c) {
            long px = span > 0.0 ? std::lround((table(r, c) - lo) / span * 255.0) : 0;
            out << px << (c + 1 == table.cols ? '\n' : ' ');
        }
    }
    out.flush();
    if (!out) throw std::runtime_error("emit_heatmap: write failed for " + path);
}

void write_csv_table(const Table& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv_table: cannot open " + path);
    out.precision(std::numeric_limits<double>::max_digits10);
    for (std::size_t r = 0; r < table.rows; ++r) {
        for (std::size_t c = 0; c < table.cols; ++c)
            out << table(r, c) << (c + 1 == table.cols ? '\n' : ',');
    }
    out.flush();
    if (!out) throw std::runtime_error("write_csv_table: write failed for " + path);
}

Table read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv_table: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            std::size_t pos = 0;
            double v = std::stod(field, &pos);
            if (pos != field.size())
                throw std::runtime_error("read_csv_table: malformed number in " + path);
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("read_csv_table: ragged rows in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("read_csv_table: empty file " + path);
    Table table(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < table.cols; ++c) table(r, c) = rows[r][c];
    return table;
}

}  // namespace rgm
