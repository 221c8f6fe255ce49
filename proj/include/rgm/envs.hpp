#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rgm/mdp.hpp"
#include "rgm/table.hpp"

namespace rgm {

/// Grid cell in (column, row) coordinates; (0,0) is the bottom-left corner.
struct Cell {
    std::size_t x = 0;
    std::size_t y = 0;
    bool operator==(const Cell& o) const { return x == o.x && y == o.y; }
};

/**
 * Grid world layout. Movement off the grid keeps the agent in place. Any
 * action taken in the goal cell leads to a dedicated absorbing state that
 * self-loops with zero reward (when absorbing_goal is set). Fire cells are
 * ordinary, non-absorbing cells: true fires genuinely belong to the task,
 * fake fires only show up in a corrupted reward signal. The defaults put
 * one fake fire on the scripted expert's route and keep the true fires off
 * it.
 */
struct GridWorldSpec {
    std::size_t width = 8;
    std::size_t height = 8;
    Cell start{0, 0};
    Cell goal{7, 7};
    std::vector<Cell> true_fires{{3, 3}, {5, 5}};
    std::vector<Cell> fake_fires{{4, 0}};
    double slip_prob = 0.0;
    bool absorbing_goal = true;
    /// When set, episodes restart uniformly over all non-goal cells instead
    /// of always at the start cell. The start cell still anchors the
    /// demonstrator trace utilities.
    bool uniform_start = false;
};

/// Action order is fixed; tables index actions in this order.
enum class GridAction : std::size_t { Up = 0, Down = 1, Left = 2, Right = 3 };
constexpr std::size_t GRID_ACTIONS = 4;

/// Flat state index of a cell (the absorbing state, if any, comes last).
std::size_t cell_index(const GridWorldSpec& spec, Cell c);

/// Cell the intended (slip-free) move from c lands on; bounces stay at c.
Cell grid_step(const GridWorldSpec& spec, Cell c, GridAction a);

/// Builds and validates the grid world MDP. Throws on malformed specs.
TabularMDP build_gridworld(const GridWorldSpec& spec, double gamma);

/**
 * Task reward table for the grid world: +10 on every (s,a) whose intended
 * move enters the goal cell; additionally -10 on every (s,a) whose intended
 * move enters a fire cell (true or fake) when fire_penalty is set.
 */
Table gridworld_base_reward(const TabularMDP& mdp, const GridWorldSpec& spec, bool fire_penalty);

/**
 * BFS distance (in moves) from every cell to the goal, routing around true
 * fire cells. Entries are -1 for true-fire cells and cells that cannot
 * reach the goal at all.
 */
std::vector<int> grid_distance_to_goal(const GridWorldSpec& spec);

/**
 * Deterministic scripted demonstrator: in each cell it takes the action
 * whose successor is closest to the goal by fire-avoiding BFS distance,
 * breaking ties in the order right, up, down, left. Fake fires are not
 * avoided; the demonstrator knows they are harmless.
 */
Policy scripted_expert_policy(const TabularMDP& mdp, const GridWorldSpec& spec);

/// Cells visited by the scripted expert from the start, goal included.
std::vector<Cell> expert_path(const TabularMDP& mdp, const GridWorldSpec& spec);

/**
 * Random walk on a discretized line. States are n_state_bins evenly spaced
 * points covering [low, high] (endpoints included) plus one absorbing
 * state; actions are n_action_bins points covering [action_low,
 * action_high]. A step moves to the nearest bin of clamp(s + a); a step
 * that lands in a goal bin (bin value >= goal_threshold) leads to the
 * absorbing state instead and pays the goal reward.
 */
struct RandomWalkSpec {
    double low = 0.0;
    double high = 3.0;
    std::size_t n_state_bins = 31;
    double action_low = -0.5;
    double action_high = 0.5;
    std::size_t n_action_bins = 11;
    double goal_threshold = 3.0;
};

/// Value of state bin i (i < n_state_bins).
double walk_state_value(const RandomWalkSpec& spec, std::size_t i);

/// Value of action bin j.
double walk_action_value(const RandomWalkSpec& spec, std::size_t j);

/// Builds and validates the random walk MDP. Throws on malformed specs.
TabularMDP build_randomwalk(const RandomWalkSpec& spec, double gamma);

/// +10 on every (s,a) whose step reaches a goal bin.
Table randomwalk_base_reward(const TabularMDP& mdp, const RandomWalkSpec& spec);

/// Demonstrator that always takes the largest action.
Policy randomwalk_expert_policy(const TabularMDP& mdp, const RandomWalkSpec& spec);

/// How the observed reward signal is corrupted relative to the task reward.
enum class RewardVariant { Zero, SparseGoal, FirePenalty, SignFlip, FullFlip, GaussianNoise };

std::string reward_variant_name(RewardVariant v);
RewardVariant reward_variant_from_name(const std::string& name);

struct ImperfectRewardSpec {
    RewardVariant variant = RewardVariant::Zero;
    double flip_fraction = 0.5;  // SignFlip only
    double noise_sigma = 1.0;    // GaussianNoise only
    std::uint64_t seed = 0;      // SignFlip / GaussianNoise only
};

/**
 * Applies the corruption to a base reward table:
 *   Zero          -> all-zero table,
 *   SparseGoal    -> base table unchanged (pass the goal-only base),
 *   FirePenalty   -> base table unchanged (pass the goal+fire base),
 *   SignFlip      -> negates a seeded fraction of the entries,
 *   FullFlip      -> negates every entry,
 *   GaussianNoise -> adds seeded N(0, sigma^2) noise per entry.
 */
Table apply_imperfect_reward(const Table& base, const ImperfectRewardSpec& spec);

}  // namespace rgm
