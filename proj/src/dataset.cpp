#include "rgm/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rgm {

void validate_dataset(const Dataset& data) {
    if (data.transitions.empty()) {
        if (!data.episode_starts.empty())
            throw std::invalid_argument("validate_dataset: episode starts without transitions");
        return;
    }
    if (data.episode_starts.empty() || data.episode_starts[0] != 0)
        throw std::invalid_argument("validate_dataset: first episode must start at index 0");
    for (std::size_t i = 1; i < data.episode_starts.size(); ++i) {
        if (data.episode_starts[i] <= data.episode_starts[i - 1])
            throw std::invalid_argument("validate_dataset: episode starts must be strictly increasing");
    }
    if (data.episode_starts.back() >= data.transitions.size())
        throw std::invalid_argument("validate_dataset: episode start past the last transition");
}

Dataset rollout(const TabularMDP& mdp, const Policy& pi, const Table& reward,
                std::size_t n_episodes, std::size_t horizon, Rng& rng) {
    if (pi.rows != mdp.n_states || pi.cols != mdp.n_actions)
        throw std::invalid_argument("rollout: policy shape mismatch");
    if (reward.rows != mdp.n_states || reward.cols != mdp.n_actions)
        throw std::invalid_argument("rollout: reward shape mismatch");
    if (horizon == 0) throw std::invalid_argument("rollout: horizon must be positive");

    Dataset data;
    data.source_mdp_id = mdp.id;
    for (std::size_t ep = 0; ep < n_episodes; ++ep) {
        data.episode_starts.push_back(data.transitions.size());
        std::size_t s = rng.sample(mdp.initial_dist.data(), mdp.n_states, 1.0);
        for (std::size_t t = 0; t < horizon; ++t) {
            if (is_absorbing_state(mdp, s)) break;
            std::size_t a = rng.sample(&pi.data[s * pi.cols], mdp.n_actions, 1.0);
            std::size_t s2 = rng.sample(&mdp.transition[(s * mdp.n_actions + a) * mdp.n_states],
                                        mdp.n_states, 1.0);
            bool done = is_absorbing_state(mdp, s2) || t + 1 == horizon;
            data.transitions.push_back({s, a, reward(s, a), s2, t, done});
            s = s2;
        }
        // An episode that starts absorbed contributes no transitions; drop
        // its start marker so the bookkeeping stays consistent.
        if (data.episode_starts.back() == data.transitions.size()) data.episode_starts.pop_back();
    }
    return data;
}

Dataset merge_datasets(const Dataset& expert, const Dataset& rest) {
    if (!expert.source_mdp_id.empty() && !rest.source_mdp_id.empty() &&
        expert.source_mdp_id != rest.source_mdp_id)
        throw std::invalid_argument("merge_datasets: datasets come from different MDPs");
    Dataset out = expert;
    std::size_t offset = out.transitions.size();
    out.transitions.insert(out.transitions.end(), rest.transitions.begin(), rest.transitions.end());
    for (std::size_t start : rest.episode_starts) out.episode_starts.push_back(start + offset);
    if (out.source_mdp_id.empty()) out.source_mdp_id = rest.source_mdp_id;
    return out;
}

Table empirical_distribution(const TabularMDP& mdp, const Dataset& data, WeightMode mode,
                             double gamma) {
    if (data.transitions.empty())
        throw std::invalid_argument("empirical_distribution: empty dataset");
    Table d(mdp.n_states, mdp.n_actions, 0.0);
    double total = 0.0;
    for (const Transition& tr : data.transitions) {
        if (tr.s >= mdp.n_states || tr.a >= mdp.n_actions)
            throw std::invalid_argument("empirical_distribution: transition outside the MDP");
        double w = mode == WeightMode::Sampling ? 1.0 : std::pow(gamma, static_cast<double>(tr.t));
        d(tr.s, tr.a) += w;
        total += w;
    }
    for (double& v : d.data) v /= total;
    return d;
}

RatioTable tabular_ratio(const Table& d_expert, const Table& d_dataset, double epsilon) {
    if (!d_expert.same_shape(d_dataset))
        throw std::invalid_argument("tabular_ratio: shape mismatch");
    if (epsilon <= 0.0) throw std::invalid_argument("tabular_ratio: epsilon must be positive");
    RatioTable out;
    out.epsilon = epsilon;
    out.w = Table(d_dataset.rows, d_dataset.cols, 0.0);
    out.log_ratio_DE = Table(d_dataset.rows, d_dataset.cols, 0.0);
    for (std::size_t i = 0; i < d_dataset.data.size(); ++i) {
        double dd = d_dataset.data[i];
        if (dd <= 0.0) continue;
        double de = d_expert.data[i];
        out.w.data[i] = de / dd;
        out.log_ratio_DE.data[i] = std::log(dd / (de + epsilon));
    }
    return out;
}

RatioTable discriminator_ratio(const Table& d_expert, const Table& d_dataset, double epsilon) {
    if (!d_expert.same_shape(d_dataset))
        throw std::invalid_argument("discriminator_ratio: shape mismatch");
    if (epsilon <= 0.0) throw std::invalid_argument("discriminator_ratio: epsilon must be positive");
    RatioTable out;
    out.epsilon = epsilon;
    out.w = Table(d_dataset.rows, d_dataset.cols, 0.0);
    out.log_ratio_DE = Table(d_dataset.rows, d_dataset.cols, 0.0);
    for (std::size_t i = 0; i < d_dataset.data.size(); ++i) {
        double dd = d_dataset.data[i];
        if (dd <= 0.0) continue;
        double de = d_expert.data[i];
        // Bayes-optimal data-vs-expert classifier, then inverted to a ratio.
        double h = dd / (dd + de);
        out.w.data[i] = 1.0 / h - 1.0;
        out.log_ratio_DE.data[i] = std::log(dd / (de + epsilon));
    }
    return out;
}

NormalizationStats normalize_rewards(Dataset& data) {
    if (data.transitions.empty())
        throw std::invalid_argument("normalize_rewards: empty dataset");
    const double n = static_cast<double>(data.transitions.size());
    double mean = 0.0;
    for (const Transition& tr : data.transitions) mean += tr.r_tilde;
    mean /= n;
    double var = 0.0;
    for (const Transition& tr : data.transitions) {
        double d = tr.r_tilde - mean;
        var += d * d;
    }
    var /= n;
    NormalizationStats stats{mean, std::sqrt(var)};
    if (stats.stddev > 0.0) {
        for (Transition& tr : data.transitions) tr.r_tilde = (tr.r_tilde - mean) / stats.stddev;
    } else {
        for (Transition& tr : data.transitions) tr.r_tilde = 0.0;
    }
    return stats;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
    validate_dataset(data);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "episode,t,s,a,r_tilde,s_next,done\n";
    std::size_t episode = 0;
    for (std::size_t i = 0; i < data.transitions.size(); ++i) {
        while (episode + 1 < data.episode_starts.size() && i >= data.episode_starts[episode + 1])
            ++episode;
        const Transition& tr = data.transitions[i];
        out << episode << ',' << tr.t << ',' << tr.s << ',' << tr.a << ',' << tr.r_tilde << ','
            << tr.s_next << ',' << (tr.done ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error("write_dataset_csv: write failed for " + path);
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);
    if (line != "episode,t,s,a,r_tilde,s_next,done")
        throw std::runtime_error("read_dataset_csv: unexpected header in " + path);

    Dataset data;
    long long last_episode = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        auto next_field = [&]() {
            if (!std::getline(row, field, ','))
                throw std::runtime_error("read_dataset_csv: short row in " + path);
            return field;
        };
        long long episode = std::stoll(next_field());
        Transition tr;
        tr.t = static_cast<std::size_t>(std::stoull(next_field()));
        tr.s = static_cast<std::size_t>(std::stoull(next_field()));
        tr.a = static_cast<std::size_t>(std::stoull(next_field()));
        tr.r_tilde = std::stod(next_field());
        tr.s_next = static_cast<std::size_t>(std::stoull(next_field()));
        tr.done = std::stoi(next_field()) != 0;
        if (episode != last_episode) {
            if (episode != last_episode + 1)
                throw std::runtime_error("read_dataset_csv: episodes out of order in " + path);
            data.episode_starts.push_back(data.transitions.size());
            last_episode = episode;
        }
        data.transitions.push_back(tr);
    }
    validate_dataset(data);
    return data;
}

}  // namespace rgm
