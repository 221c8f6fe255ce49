#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgm/experiment.hpp"

namespace {

struct RunOptions {
    std::string env = "gridworld";
    std::string reward = "zero";
    std::size_t grid_width = 8;
    std::size_t grid_height = 8;
    std::string grid_start = "0,0";
    std::string grid_goal = "7,7";
    std::string true_fires = "3,3;5,5";
    std::string fake_fires = "4,0";
    double slip = 0.0;
    bool uniform_start = false;
    bool expert_uniform_start = false;
    double flip_fraction = 0.5;
    double noise_sigma = 1.0;
    std::size_t episodes = 1000;
    std::size_t horizon = 100;
    std::string behavior = "random";
    double expert_mix = 0.75;
    std::size_t expert_trajectories = 1;
    std::string expert_source = "scripted";
    std::string expert_file;
    double alpha = 0.5;
    std::string divergence = "kl";
    double gamma = 0.99;
    double lr_v = 0.1;
    double lr_dr = 1e-3;
    std::string lr_schedule = "constant";
    std::size_t iterations = 400000;
    std::size_t batch_size = 0;
    double exp_clip = 100.0;
    double ratio_epsilon = 1e-8;
    std::string mode = "sampling";
    double correction_bound = 3.0;
    std::size_t log_every = 500;
    std::uint64_t seed = 0;
    std::string output_dir;
};

void add_run_options(CLI::App& cmd, RunOptions& opt) {
    cmd.add_option("--env", opt.env, "Environment: gridworld or randomwalk")
        ->capture_default_str();
    cmd.add_option("--reward", opt.reward,
                   "Observed reward variant: zero, sparse-goal, fire-penalty, sign-flip, "
                   "full-flip, gaussian-noise")
        ->capture_default_str();
    cmd.add_option("--grid-width", opt.grid_width, "Grid world width")->capture_default_str();
    cmd.add_option("--grid-height", opt.grid_height, "Grid world height")->capture_default_str();
    cmd.add_option("--grid-start", opt.grid_start, "Start cell as x,y")->capture_default_str();
    cmd.add_option("--grid-goal", opt.grid_goal, "Goal cell as x,y")->capture_default_str();
    cmd.add_option("--true-fires", opt.true_fires,
                   "True fire cells as x,y;x,y (empty string for none)")
        ->capture_default_str();
    cmd.add_option("--fake-fires", opt.fake_fires,
                   "Fake fire cells as x,y;x,y (empty string for none)")
        ->capture_default_str();
    cmd.add_option("--slip", opt.slip, "Probability a grid move slips to another direction")
        ->capture_default_str();
    cmd.add_flag("--uniform-start", opt.uniform_start,
                 "Restart episodes uniformly over non-goal cells");
    cmd.add_flag("--expert-uniform-start", opt.expert_uniform_start,
                 "Roll expert demonstrations from uniform starts");
    cmd.add_option("--flip-fraction", opt.flip_fraction, "Entry fraction negated by sign-flip")
        ->capture_default_str();
    cmd.add_option("--noise-sigma", opt.noise_sigma, "Gaussian noise scale for gaussian-noise")
        ->capture_default_str();
    cmd.add_option("--episodes", opt.episodes, "Behavior episodes in the dataset")
        ->capture_default_str();
    cmd.add_option("--horizon", opt.horizon, "Maximum steps per episode")->capture_default_str();
    cmd.add_option("--behavior", opt.behavior, "Behavior policy: random or mixture")
        ->capture_default_str();
    cmd.add_option("--expert-mix", opt.expert_mix, "Expert weight of the mixture behavior")
        ->capture_default_str();
    cmd.add_option("--expert-trajectories", opt.expert_trajectories,
                   "Scripted expert demonstrations")
        ->capture_default_str();
    cmd.add_option("--expert-source", opt.expert_source, "Expert data source: scripted or file")
        ->capture_default_str();
    cmd.add_option("--expert-file", opt.expert_file, "Expert dataset CSV (file source)");
    cmd.add_option("--alpha", opt.alpha, "Regularization strength")->capture_default_str();
    cmd.add_option("--divergence", opt.divergence, "Divergence: kl or chi2")
        ->capture_default_str();
    cmd.add_option("--gamma", opt.gamma, "Discount factor")->capture_default_str();
    cmd.add_option("--lr-v", opt.lr_v, "Value step size")->capture_default_str();
    cmd.add_option("--lr-dr", opt.lr_dr, "Correction step size (0 freezes the correction)")
        ->capture_default_str();
    cmd.add_option("--lr-schedule", opt.lr_schedule, "Correction schedule: constant or cosine")
        ->capture_default_str();
    cmd.add_option("--iterations", opt.iterations, "Two-timescale steps")->capture_default_str();
    cmd.add_option("--batch-size", opt.batch_size, "Minibatch size (0 = full batch)")
        ->capture_default_str();
    cmd.add_option("--exp-clip", opt.exp_clip, "Clip for exponentiated advantages")
        ->capture_default_str();
    cmd.add_option("--ratio-epsilon", opt.ratio_epsilon, "Smoothing for dataset/expert log ratios")
        ->capture_default_str();
    cmd.add_option("--mode", opt.mode, "Distribution weighting: sampling or discounted")
        ->capture_default_str();
    cmd.add_option("--correction-bound", opt.correction_bound, "Bound on |delta_r|")
        ->capture_default_str();
    cmd.add_option("--log-every", opt.log_every, "History record interval")->capture_default_str();
    cmd.add_option("--seed", opt.seed, "Run seed (drives all random streams)")
        ->capture_default_str();
    cmd.add_option("--output-dir,-o", opt.output_dir,
                   "Artifact directory (default: RGM_OUTPUT_DIR or rgm-output)");
}

rgm::Cell parse_cell(const std::string& text) {
    std::size_t comma = text.find(',');
    std::size_t pos = 0;
    if (comma == std::string::npos) throw std::invalid_argument("expected x,y, got " + text);
    std::string xs = text.substr(0, comma);
    std::string ys = text.substr(comma + 1);
    rgm::Cell c;
    c.x = std::stoul(xs, &pos);
    if (pos != xs.size()) throw std::invalid_argument("expected x,y, got " + text);
    c.y = std::stoul(ys, &pos);
    if (pos != ys.size()) throw std::invalid_argument("expected x,y, got " + text);
    return c;
}

std::vector<rgm::Cell> parse_cells(const std::string& text) {
    std::vector<rgm::Cell> cells;
    std::size_t begin = 0;
    while (begin < text.size()) {
        std::size_t end = text.find(';', begin);
        if (end == std::string::npos) end = text.size();
        if (end > begin) cells.push_back(parse_cell(text.substr(begin, end - begin)));
        begin = end + 1;
    }
    return cells;
}

rgm::ExperimentConfig config_from_options(const RunOptions& opt) {
    rgm::ExperimentConfig config;
    config.env = rgm::env_kind_from_name(opt.env);
    config.grid.width = opt.grid_width;
    config.grid.height = opt.grid_height;
    config.grid.start = parse_cell(opt.grid_start);
    config.grid.goal = parse_cell(opt.grid_goal);
    config.grid.true_fires = parse_cells(opt.true_fires);
    config.grid.fake_fires = parse_cells(opt.fake_fires);
    config.grid.slip_prob = opt.slip;
    config.grid.uniform_start = opt.uniform_start;
    config.expert.uniform_start = opt.expert_uniform_start;
    config.reward.variant = rgm::reward_variant_from_name(opt.reward);
    config.reward.flip_fraction = opt.flip_fraction;
    config.reward.noise_sigma = opt.noise_sigma;
    config.dataset.n_episodes = opt.episodes;
    config.dataset.horizon = opt.horizon;
    config.dataset.behavior = rgm::behavior_kind_from_name(opt.behavior);
    config.dataset.expert_mix = opt.expert_mix;
    config.expert.n_trajectories = opt.expert_trajectories;
    if (opt.expert_source == "scripted") {
        config.expert.source = rgm::ExpertSource::Scripted;
    } else if (opt.expert_source == "file") {
        config.expert.source = rgm::ExpertSource::File;
    } else {
        throw std::invalid_argument("unknown expert source " + opt.expert_source);
    }
    config.expert.file = opt.expert_file;
    config.solver.alpha = opt.alpha;
    config.solver.divergence = rgm::divergence_from_name(opt.divergence);
    config.solver.gamma = opt.gamma;
    config.solver.lr_v = opt.lr_v;
    config.solver.lr_dr = opt.lr_dr;
    if (opt.lr_schedule == "constant") {
        config.solver.lr_dr_schedule = rgm::LrSchedule::Constant;
    } else if (opt.lr_schedule == "cosine") {
        config.solver.lr_dr_schedule = rgm::LrSchedule::Cosine;
    } else {
        throw std::invalid_argument("unknown lr schedule " + opt.lr_schedule);
    }
    config.solver.iterations = opt.iterations;
    config.solver.batch_size = opt.batch_size;
    config.solver.exp_clip = opt.exp_clip;
    config.solver.ratio_epsilon = opt.ratio_epsilon;
    if (opt.mode == "sampling") {
        config.solver.distribution_mode = rgm::WeightMode::Sampling;
    } else if (opt.mode == "discounted") {
        config.solver.distribution_mode = rgm::WeightMode::Discounted;
    } else {
        throw std::invalid_argument("unknown distribution mode " + opt.mode);
    }
    config.solver.correction_bound = opt.correction_bound;
    config.solver.log_every = opt.log_every;
    config.seed = opt.seed;
    config.output_dir = opt.output_dir;
    return config;
}

void print_result(const rgm::ExperimentResult& result, const rgm::ExperimentConfig& config) {
    std::printf("wrote %s\n", result.output_dir.c_str());
    std::printf("goal_reach_rate     %.6f\n", result.goal_reach_rate);
    std::printf("reward_gap          %.6f -> %.6f\n", result.reward_gap_initial,
                result.reward_gap_final);
    std::printf("dr_mean expert/other %.6f / %.6f\n", result.dr_mean_expert_final,
                result.dr_mean_other_final);
    if (config.env == rgm::EnvKind::GridWorld)
        std::printf("fire_mass true/fake  %.6f / %.6f\n", result.true_fire_mass,
                    result.fake_fire_mass);
}

// "A" or "A..B" (inclusive).
std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
    std::size_t sep = text.find("..");
    std::size_t pos = 0;
    std::uint64_t first = std::stoull(text, &pos);
    std::uint64_t last = first;
    if (sep != std::string::npos) {
        if (pos != sep) throw std::invalid_argument("bad seed range " + text);
        std::string tail = text.substr(sep + 2);
        last = std::stoull(tail, &pos);
        if (pos != tail.size()) throw std::invalid_argument("bad seed range " + text);
    } else if (pos != text.size()) {
        throw std::invalid_argument("bad seed range " + text);
    }
    if (last < first) throw std::invalid_argument("bad seed range " + text);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = first; s <= last; ++s) seeds.push_back(s);
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward-gap minimization experiments on tabular MDPs"};
    app.set_config("--config", "", "TOML/INI config file; flags override file values");
    app.require_subcommand(1);

    RunOptions run_opt;
    CLI::App* run_cmd = app.add_subcommand("run", "Run one experiment and write its artifacts");
    add_run_options(*run_cmd, run_opt);

    RunOptions sweep_opt;
    std::string sweep_seeds = "0..2";
    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "Run the same experiment over a range of seeds");
    add_run_options(*sweep_cmd, sweep_opt);
    sweep_cmd->add_option("--seeds", sweep_seeds, "Seed range, e.g. 0..4 or a single seed")
        ->capture_default_str();

    std::size_t duality_instances = 50;
    std::uint64_t duality_seed = 0;
    double gap_tolerance = 1e-5;
    double flow_tolerance = 1e-5;
    std::string duality_output;
    CLI::App* duality_cmd = app.add_subcommand(
        "duality-check", "Verify primal/dual agreement on random instances");
    duality_cmd->add_option("--instances", duality_instances, "Random instances to solve")
        ->capture_default_str();
    duality_cmd->add_option("--seed", duality_seed, "Instance generator seed")
        ->capture_default_str();
    duality_cmd->add_option("--gap-tolerance", gap_tolerance, "Allowed |primal - dual|")
        ->capture_default_str();
    duality_cmd->add_option("--flow-tolerance", flow_tolerance, "Allowed Bellman flow residual")
        ->capture_default_str();
    duality_cmd->add_option("--output", duality_output, "Optional CSV report path");

    std::string heatmap_input;
    std::string heatmap_format = "pgm";
    std::string heatmap_output;
    CLI::App* heatmap_cmd =
        app.add_subcommand("export-heatmap", "Convert a CSV table to a heatmap file");
    heatmap_cmd->add_option("--input", heatmap_input, "CSV table to read")->required();
    heatmap_cmd->add_option("--format", heatmap_format, "Output format: csv or pgm")
        ->capture_default_str();
    heatmap_cmd->add_option("--output", heatmap_output, "Destination path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run_cmd->parsed()) {
            rgm::ExperimentConfig config = config_from_options(run_opt);
            rgm::ExperimentResult result = rgm::run_experiment(config);
            print_result(result, config);
        } else if (sweep_cmd->parsed()) {
            rgm::ExperimentConfig config = config_from_options(sweep_opt);
            std::string base_dir = config.output_dir;
            if (base_dir.empty()) {
                const char* env_dir = std::getenv("RGM_OUTPUT_DIR");
                base_dir = (env_dir != nullptr && env_dir[0] != '\0') ? env_dir : "rgm-output";
            }
            for (std::uint64_t seed : parse_seed_range(sweep_seeds)) {
                config.seed = seed;
                config.output_dir = base_dir + "/seed-" + std::to_string(seed);
                rgm::ExperimentResult result = rgm::run_experiment(config);
                std::printf("seed %llu\n", static_cast<unsigned long long>(seed));
                print_result(result, config);
            }
        } else if (duality_cmd->parsed()) {
            rgm::DualityReport report = rgm::run_duality_check(
                duality_instances, duality_seed, gap_tolerance, flow_tolerance, duality_output);
            std::printf("instances %zu rows %zu\n", duality_instances, report.rows.size());
            std::printf("max_gap           %.3e (tolerance %.3e)\n", report.max_gap,
                        gap_tolerance);
            std::printf("max_flow_residual %.3e (tolerance %.3e)\n", report.max_flow_residual,
                        flow_tolerance);
            if (!report.ok) {
                std::fprintf(stderr, "duality check failed\n");
                return 3;
            }
            std::printf("duality check passed\n");
        } else if (heatmap_cmd->parsed()) {
            rgm::HeatmapFormat format;
            if (heatmap_format == "csv") {
                format = rgm::HeatmapFormat::Csv;
            } else if (heatmap_format == "pgm") {
                format = rgm::HeatmapFormat::Pgm;
            } else {
                throw std::invalid_argument("unknown heatmap format " + heatmap_format);
            }
            rgm::Table table = rgm::read_csv_table(heatmap_input);
            rgm::emit_heatmap(table, format, heatmap_output);
            std::printf("wrote %s\n", heatmap_output.c_str());
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
