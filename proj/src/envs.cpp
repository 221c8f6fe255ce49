#include "rgm/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "rgm/rng.hpp"

namespace rgm {

namespace {

bool in_bounds(const GridWorldSpec& spec, Cell c) {
    return c.x < spec.width && c.y < spec.height;
}

bool contains(const std::vector<Cell>& cells, Cell c) {
    return std::find(cells.begin(), cells.end(), c) != cells.end();
}

void validate_grid_spec(const GridWorldSpec& spec) {
    if (spec.width == 0 || spec.height == 0)
        throw std::invalid_argument("build_gridworld: empty grid");
    if (!in_bounds(spec, spec.start) || !in_bounds(spec, spec.goal))
        throw std::invalid_argument("build_gridworld: start or goal out of bounds");
    for (Cell c : spec.true_fires)
        if (!in_bounds(spec, c)) throw std::invalid_argument("build_gridworld: true fire out of bounds");
    for (Cell c : spec.fake_fires)
        if (!in_bounds(spec, c)) throw std::invalid_argument("build_gridworld: fake fire out of bounds");
    if (contains(spec.true_fires, spec.goal) || contains(spec.fake_fires, spec.goal))
        throw std::invalid_argument("build_gridworld: goal must not be a fire cell");
    for (Cell c : spec.true_fires)
        if (contains(spec.fake_fires, c))
            throw std::invalid_argument("build_gridworld: true and fake fire sets must be disjoint");
    if (spec.slip_prob < 0.0 || spec.slip_prob > 1.0)
        throw std::invalid_argument("build_gridworld: slip_prob outside [0, 1]");
}

}  // namespace

std::size_t cell_index(const GridWorldSpec& spec, Cell c) {
    return c.y * spec.width + c.x;
}

Cell grid_step(const GridWorldSpec& spec, Cell c, GridAction a) {
    long x = static_cast<long>(c.x);
    long y = static_cast<long>(c.y);
    switch (a) {
        case GridAction::Up: y += 1; break;
        case GridAction::Down: y -= 1; break;
        case GridAction::Left: x -= 1; break;
        case GridAction::Right: x += 1; break;
    }
    if (x < 0 || y < 0 || x >= static_cast<long>(spec.width) || y >= static_cast<long>(spec.height))
        return c;
    return Cell{static_cast<std::size_t>(x), static_cast<std::size_t>(y)};
}

TabularMDP build_gridworld(const GridWorldSpec& spec, double gamma) {
    validate_grid_spec(spec);

    const std::size_t n_cells = spec.width * spec.height;
    const std::size_t S = n_cells + (spec.absorbing_goal ? 1 : 0);
    const std::size_t absorbing = n_cells;  // valid only when absorbing_goal

    TabularMDP mdp;
    mdp.n_states = S;
    mdp.n_actions = GRID_ACTIONS;
    mdp.gamma = gamma;
    mdp.transition.assign(S * GRID_ACTIONS * S, 0.0);
    mdp.initial_dist.assign(S, 0.0);
    if (spec.uniform_start) {
        const double p = 1.0 / static_cast<double>(n_cells - 1);
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x)
                if (!(Cell{x, y} == spec.goal)) mdp.initial_dist[cell_index(spec, Cell{x, y})] = p;
    } else {
        mdp.initial_dist[cell_index(spec, spec.start)] = 1.0;
    }
    mdp.id = "gridworld";

    for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
            Cell c{x, y};
            std::size_t s = cell_index(spec, c);
            for (std::size_t a = 0; a < GRID_ACTIONS; ++a) {
                if (spec.absorbing_goal && c == spec.goal) {
                    mdp.prob(s, a, absorbing) = 1.0;
                    continue;
                }
                // Slip replaces the intended move by one of the other three
                // directions, each with slip_prob / 3.
                for (std::size_t m = 0; m < GRID_ACTIONS; ++m) {
                    double p = (m == a) ? 1.0 - spec.slip_prob : spec.slip_prob / 3.0;
                    if (p == 0.0) continue;
                    std::size_t s2 = cell_index(spec, grid_step(spec, c, static_cast<GridAction>(m)));
                    mdp.prob(s, a, s2) += p;
                }
            }
        }
    }
    if (spec.absorbing_goal) {
        for (std::size_t a = 0; a < GRID_ACTIONS; ++a) mdp.prob(absorbing, a, absorbing) = 1.0;
    }

    validate_mdp(mdp);
    return mdp;
}

Table gridworld_base_reward(const TabularMDP& mdp, const GridWorldSpec& spec, bool fire_penalty) {
    Table r(mdp.n_states, mdp.n_actions, 0.0);
    for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
            Cell c{x, y};
            if (spec.absorbing_goal && c == spec.goal) continue;  // leads to the absorbing state
            std::size_t s = cell_index(spec, c);
            for (std::size_t a = 0; a < GRID_ACTIONS; ++a) {
                Cell next = grid_step(spec, c, static_cast<GridAction>(a));
                if (next == spec.goal) r(s, a) += 10.0;
                if (fire_penalty && (contains(spec.true_fires, next) || contains(spec.fake_fires, next)))
                    r(s, a) -= 10.0;
            }
        }
    }
    return r;
}

std::vector<int> grid_distance_to_goal(const GridWorldSpec& spec) {
    const std::size_t n_cells = spec.width * spec.height;
    std::vector<int> dist(n_cells, -1);
    std::deque<Cell> queue;
    dist[cell_index(spec, spec.goal)] = 0;
    queue.push_back(spec.goal);
    while (!queue.empty()) {
        Cell c = queue.front();
        queue.pop_front();
        int d = dist[cell_index(spec, c)];
        for (std::size_t a = 0; a < GRID_ACTIONS; ++a) {
            Cell n = grid_step(spec, c, static_cast<GridAction>(a));
            if (n == c) continue;
            if (contains(spec.true_fires, n)) continue;
            std::size_t ni = cell_index(spec, n);
            if (dist[ni] == -1) {
                dist[ni] = d + 1;
                queue.push_back(n);
            }
        }
    }
    for (Cell c : spec.true_fires) dist[cell_index(spec, c)] = -1;
    return dist;
}

Policy scripted_expert_policy(const TabularMDP& mdp, const GridWorldSpec& spec) {
    std::vector<int> dist = grid_distance_to_goal(spec);
    Policy pi = uniform_policy(mdp);
    const GridAction priority[] = {GridAction::Right, GridAction::Up, GridAction::Down,
                                   GridAction::Left};
    for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
            Cell c{x, y};
            std::size_t s = cell_index(spec, c);
            if (dist[s] < 0) continue;  // fire or unreachable: keep uniform, never visited
            int best = -1;
            GridAction best_action = priority[0];
            for (GridAction a : priority) {
                Cell n = grid_step(spec, c, a);
                if (n == c) continue;
                int dn = dist[cell_index(spec, n)];
                if (dn < 0) continue;
                if (best == -1 || dn < best) {
                    best = dn;
                    best_action = a;
                }
            }
            for (std::size_t a = 0; a < GRID_ACTIONS; ++a) pi(s, a) = 0.0;
            if (c == spec.goal || best == -1) {
                pi(s, static_cast<std::size_t>(priority[0])) = 1.0;
            } else {
                pi(s, static_cast<std::size_t>(best_action)) = 1.0;
            }
        }
    }
    return pi;
}

std::vector<Cell> expert_path(const TabularMDP& mdp, const GridWorldSpec& spec) {
    Policy pi = scripted_expert_policy(mdp, spec);
    std::vector<Cell> path;
    Cell c = spec.start;
    const std::size_t cap = spec.width * spec.height + 2;
    for (std::size_t step = 0; step < cap; ++step) {
        path.push_back(c);
        if (c == spec.goal) break;
        std::size_t s = cell_index(spec, c);
        std::size_t a = 0;
        for (std::size_t k = 0; k < GRID_ACTIONS; ++k) {
            if (pi(s, k) == 1.0) a = k;
        }
        Cell n = grid_step(spec, c, static_cast<GridAction>(a));
        if (n == c) break;  // demonstrator is stuck; malformed layout
        c = n;
    }
    return path;
}

double walk_state_value(const RandomWalkSpec& spec, std::size_t i) {
    if (spec.n_state_bins == 1) return spec.low;
    return spec.low + static_cast<double>(i) * (spec.high - spec.low) /
                          static_cast<double>(spec.n_state_bins - 1);
}

double walk_action_value(const RandomWalkSpec& spec, std::size_t j) {
    if (spec.n_action_bins == 1) return spec.action_low;
    return spec.action_low + static_cast<double>(j) * (spec.action_high - spec.action_low) /
                                 static_cast<double>(spec.n_action_bins - 1);
}

namespace {

void validate_walk_spec(const RandomWalkSpec& spec) {
    if (spec.n_state_bins < 2) throw std::invalid_argument("build_randomwalk: need at least 2 state bins");
    if (spec.n_action_bins < 1) throw std::invalid_argument("build_randomwalk: need at least 1 action bin");
    if (!(spec.high > spec.low)) throw std::invalid_argument("build_randomwalk: high must exceed low");
    if (!(spec.action_high >= spec.action_low))
        throw std::invalid_argument("build_randomwalk: action_high must be >= action_low");
}

std::size_t nearest_state_bin(const RandomWalkSpec& spec, double x) {
    double clamped = std::min(std::max(x, spec.low), spec.high);
    double step = (spec.high - spec.low) / static_cast<double>(spec.n_state_bins - 1);
    long i = std::lround((clamped - spec.low) / step);
    if (i < 0) i = 0;
    if (i >= static_cast<long>(spec.n_state_bins)) i = static_cast<long>(spec.n_state_bins) - 1;
    return static_cast<std::size_t>(i);
}

bool is_goal_bin(const RandomWalkSpec& spec, std::size_t i) {
    double threshold = std::min(std::max(spec.goal_threshold, spec.low), spec.high);
    return walk_state_value(spec, i) >= threshold;
}

}  // namespace

TabularMDP build_randomwalk(const RandomWalkSpec& spec, double gamma) {
    validate_walk_spec(spec);

    const std::size_t n_bins = spec.n_state_bins;
    const std::size_t S = n_bins + 1;
    const std::size_t absorbing = n_bins;
    const std::size_t A = spec.n_action_bins;

    TabularMDP mdp;
    mdp.n_states = S;
    mdp.n_actions = A;
    mdp.gamma = gamma;
    mdp.transition.assign(S * A * S, 0.0);
    mdp.initial_dist.assign(S, 0.0);
    mdp.initial_dist[nearest_state_bin(spec, 0.0)] = 1.0;
    mdp.id = "randomwalk";

    for (std::size_t s = 0; s < n_bins; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            std::size_t next = nearest_state_bin(spec, walk_state_value(spec, s) + walk_action_value(spec, a));
            // Landing in a goal bin ends the episode.
            mdp.prob(s, a, is_goal_bin(spec, next) ? absorbing : next) = 1.0;
        }
    }
    for (std::size_t a = 0; a < A; ++a) mdp.prob(absorbing, a, absorbing) = 1.0;

    validate_mdp(mdp);
    return mdp;
}

Table randomwalk_base_reward(const TabularMDP& mdp, const RandomWalkSpec& spec) {
    Table r(mdp.n_states, mdp.n_actions, 0.0);
    for (std::size_t s = 0; s < spec.n_state_bins; ++s) {
        for (std::size_t a = 0; a < spec.n_action_bins; ++a) {
            std::size_t next = nearest_state_bin(spec, walk_state_value(spec, s) + walk_action_value(spec, a));
            if (is_goal_bin(spec, next)) r(s, a) = 10.0;
        }
    }
    return r;
}

Policy randomwalk_expert_policy(const TabularMDP& mdp, const RandomWalkSpec& spec) {
    Policy pi(mdp.n_states, mdp.n_actions, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) pi(s, spec.n_action_bins - 1) = 1.0;
    return pi;
}

std::string reward_variant_name(RewardVariant v) {
    switch (v) {
        case RewardVariant::Zero: return "zero";
        case RewardVariant::SparseGoal: return "sparse-goal";
        case RewardVariant::FirePenalty: return "fire-penalty";
        case RewardVariant::SignFlip: return "sign-flip";
        case RewardVariant::FullFlip: return "full-flip";
        case RewardVariant::GaussianNoise: return "gaussian-noise";
    }
    throw std::invalid_argument("reward_variant_name: unknown variant");
}

RewardVariant reward_variant_from_name(const std::string& name) {
    if (name == "zero") return RewardVariant::Zero;
    if (name == "sparse-goal") return RewardVariant::SparseGoal;
    if (name == "fire-penalty") return RewardVariant::FirePenalty;
    if (name == "sign-flip") return RewardVariant::SignFlip;
    if (name == "full-flip") return RewardVariant::FullFlip;
    if (name == "gaussian-noise") return RewardVariant::GaussianNoise;
    throw std::invalid_argument("reward_variant_from_name: unknown variant '" + name + "'");
}

Table apply_imperfect_reward(const Table& base, const ImperfectRewardSpec& spec) {
    Table out = base;
    switch (spec.variant) {
        case RewardVariant::Zero:
            std::fill(out.data.begin(), out.data.end(), 0.0);
            return out;
        case RewardVariant::SparseGoal:
        case RewardVariant::FirePenalty:
            // The caller supplies the matching base table; the observed
            // signal equals the task signal for these variants.
            return out;
        case RewardVariant::FullFlip:
            for (double& v : out.data) v = -v;
            return out;
        case RewardVariant::SignFlip: {
            if (spec.flip_fraction < 0.0 || spec.flip_fraction > 1.0)
                throw std::invalid_argument("apply_imperfect_reward: flip_fraction outside [0, 1]");
            std::size_t n = out.data.size();
            std::size_t k = static_cast<std::size_t>(
                std::llround(spec.flip_fraction * static_cast<double>(n)));
            // Seeded partial Fisher-Yates selects k distinct entries.
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) order[i] = i;
            Rng rng(spec.seed);
            for (std::size_t i = 0; i < k; ++i) {
                std::size_t j = i + rng.uniform_below(n - i);
                std::swap(order[i], order[j]);
                out.data[order[i]] = -out.data[order[i]];
            }
            return out;
        }
        case RewardVariant::GaussianNoise: {
            if (spec.noise_sigma < 0.0)
                throw std::invalid_argument("apply_imperfect_reward: noise_sigma must be >= 0");
            Rng rng(spec.seed);
            for (double& v : out.data) v += spec.noise_sigma * rng.normal();
            return out;
        }
    }
    throw std::invalid_argument("apply_imperfect_reward: unknown variant");
}

}  // namespace rgm
