#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "rgm/envs.hpp"
#include "rgm/oracle.hpp"
#include "rgm/rng.hpp"
#include "rgm/solver.hpp"

using namespace rgm;

namespace {

// Shared fixture: a random instance plus a perturbed V and a random bounded
// correction sitting on the instance's reward, for gradient checks.
struct GradCase {
    OracleInstance inst;
    ValueVector v;
    RewardCorrection correction;
    RatioTable ratio;
};

GradCase make_grad_case(Rng& rng) {
    GradCase gc;
    gc.inst = random_instance(rng);
    const TabularMDP& mdp = gc.inst.mdp;
    gc.v.resize(mdp.n_states);
    for (double& x : gc.v) x = rng.uniform01() - 0.5;

    gc.correction.bound = 3.0;
    gc.correction.raw = Table(mdp.n_states, mdp.n_actions, 0.0);
    gc.correction.r_tilde = gc.inst.r_hat;
    for (double& x : gc.correction.raw.data) x = 2.0 * rng.uniform01() - 1.0;

    // A synthetic expert distribution sharing the dataset's support.
    Table d_expert = gc.inst.d_dataset;
    double total = 0.0;
    for (double& x : d_expert.data) {
        x *= 0.25 + rng.uniform01();
        total += x;
    }
    for (double& x : d_expert.data) x /= total;
    gc.ratio = tabular_ratio(d_expert, gc.inst.d_dataset);
    return gc;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("advantage by hand on the two-state swap chain") {
    TabularMDP mdp;
    mdp.n_states = 2;
    mdp.n_actions = 1;
    mdp.transition = {0.0, 1.0, 1.0, 0.0};
    mdp.initial_dist = {1.0, 0.0};
    mdp.gamma = 0.9;
    validate_mdp(mdp);
    Table r(2, 1, 0.0);
    r(0, 0) = 1.0;
    r(1, 0) = -1.0;
    ValueVector v = {2.0, -3.0};
    Table adv = advantage(r, v, mdp);
    CHECK(adv(0, 0) == doctest::Approx(1.0 + 0.9 * -3.0 - 2.0));
    CHECK(adv(1, 0) == doctest::Approx(-1.0 + 0.9 * 2.0 + 3.0));
}

TEST_CASE("lower gradient matches central finite differences") {
    Rng rng(21);
    const double h = 1e-5;
    for (int trial = 0; trial < 20; ++trial) {
        GradCase gc = make_grad_case(rng);
        const TabularMDP& mdp = gc.inst.mdp;
        for (FDivergence kind : {FDivergence::KL, FDivergence::ChiSquared}) {
            ValueVector g =
                lower_gradient(gc.v, gc.inst.r_hat, gc.inst.d_dataset, mdp, 1.0, kind);
            for (std::size_t s = 0; s < mdp.n_states; ++s) {
                ValueVector vp = gc.v, vm = gc.v;
                vp[s] += h;
                vm[s] -= h;
                double fd = (lower_loss(vp, gc.inst.r_hat, gc.inst.d_dataset, mdp, 1.0, kind) -
                             lower_loss(vm, gc.inst.r_hat, gc.inst.d_dataset, mdp, 1.0, kind)) /
                            (2.0 * h);
                CHECK(std::abs(g[s] - fd) <= 1e-5 * (1.0 + std::abs(fd)));
            }
        }
    }
}

TEST_CASE("lower gradient respects the value mask") {
    Rng rng(31);
    GradCase gc = make_grad_case(rng);
    const TabularMDP& mdp = gc.inst.mdp;
    std::vector<char> v_free(mdp.n_states, 1);
    v_free[0] = 0;
    ValueVector g = lower_gradient(gc.v, gc.inst.r_hat, gc.inst.d_dataset, mdp, 1.0,
                                   FDivergence::KL, &v_free);
    CHECK(g[0] == 0.0);
}

TEST_CASE("upper gradient matches central finite differences") {
    Rng rng(22);
    const double h = 1e-5;
    SolverConfig config;
    config.alpha = 1.0;
    config.gamma = 0.9;  // random_instance discount
    config.exp_clip = 1e6;
    config.correction_bound = 3.0;
    for (int trial = 0; trial < 20; ++trial) {
        GradCase gc = make_grad_case(rng);
        const TabularMDP& mdp = gc.inst.mdp;
        for (FDivergence kind : {FDivergence::KL, FDivergence::ChiSquared}) {
            config.divergence = kind;
            Table g = upper_gradient(gc.correction, gc.v, gc.inst.d_dataset, gc.ratio, mdp, config);
            for (std::size_t i = 0; i < g.size(); ++i) {
                RewardCorrection cp = gc.correction, cm = gc.correction;
                cp.raw.data[i] += h;
                cm.raw.data[i] -= h;
                double fd = (upper_loss(cp, gc.v, gc.inst.d_dataset, gc.ratio, mdp, config) -
                             upper_loss(cm, gc.v, gc.inst.d_dataset, gc.ratio, mdp, config)) /
                            (2.0 * h);
                CHECK(std::abs(g.data[i] - fd) <= 1e-5 * (1.0 + std::abs(fd)));
            }
        }
    }
}

TEST_CASE("KL lower loss is invariant to constant value shifts") {
    Rng rng(23);
    GradCase gc = make_grad_case(rng);
    const TabularMDP& mdp = gc.inst.mdp;
    double base = lower_loss(gc.v, gc.inst.r_hat, gc.inst.d_dataset, mdp, 0.7, FDivergence::KL);
    ValueVector shifted = gc.v;
    for (double& x : shifted) x += 13.25;
    double moved =
        lower_loss(shifted, gc.inst.r_hat, gc.inst.d_dataset, mdp, 0.7, FDivergence::KL);
    CHECK(moved - base == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("KL optimal ratio self-normalizes") {
    Rng rng(24);
    for (int trial = 0; trial < 10; ++trial) {
        GradCase gc = make_grad_case(rng);
        const TabularMDP& mdp = gc.inst.mdp;
        Table psi = optimal_ratio(gc.v, gc.inst.r_hat, gc.inst.d_dataset, mdp, 0.5,
                                  FDivergence::KL, 100.0);
        double mass = 0.0;
        for (std::size_t i = 0; i < psi.size(); ++i)
            mass += gc.inst.d_dataset.data[i] * psi.data[i];
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
        for (double x : psi.data) CHECK(x >= 0.0);
    }
}

TEST_CASE("chi-squared optimal ratio is the rectified affine advantage") {
    Rng rng(25);
    GradCase gc = make_grad_case(rng);
    const TabularMDP& mdp = gc.inst.mdp;
    double alpha = 0.8;
    Table psi = optimal_ratio(gc.v, gc.inst.r_hat, gc.inst.d_dataset, mdp, alpha,
                              FDivergence::ChiSquared, 100.0);
    Table adv = advantage(gc.inst.r_hat, gc.v, mdp);
    for (std::size_t i = 0; i < psi.size(); ++i)
        CHECK(psi.data[i] == doctest::Approx(std::max(0.0, adv.data[i] / alpha + 1.0)));
}

TEST_CASE("policy extraction recovers the expert conditional from exact ratios") {
    Rng rng(26);
    GradCase gc = make_grad_case(rng);
    const TabularMDP& mdp = gc.inst.mdp;
    Table d_expert(mdp.n_states, mdp.n_actions, 0.0);
    for (std::size_t i = 0; i < d_expert.size(); ++i)
        d_expert.data[i] = gc.ratio.w.data[i] * gc.inst.d_dataset.data[i];
    Policy expert_pi = policy_of_occupancy(mdp, d_expert);
    Policy extracted = extract_policy(gc.ratio.w, gc.inst.d_dataset);
    CHECK(table_max_abs_diff(expert_pi, extracted) <= 1e-9);
}

TEST_CASE("reward gap vanishes exactly on the expert and decreases toward it") {
    Rng rng(27);
    GradCase gc = make_grad_case(rng);
    const TabularMDP& mdp = gc.inst.mdp;
    Table d_expert = gc.inst.d_dataset;
    CHECK(reward_gap(d_expert, d_expert, FDivergence::KL) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(reward_gap(d_expert, d_expert, FDivergence::ChiSquared) ==
          doctest::Approx(0.0).epsilon(1e-6));
    // A distribution off the expert has a strictly positive gap.
    Table other = d_expert;
    other.data[0] += 0.1;
    double total = table_sum(other);
    for (double& x : other.data) x /= total;
    CHECK(reward_gap(other, d_expert, FDivergence::KL) > 1e-4);
}

TEST_CASE("generic upper loss on a two-entry toy") {
    Table psi(1, 2, 0.0), w(1, 2, 1.0), weights(1, 2, 0.5);
    psi(0, 0) = 2.0;
    // KL: 0.5 * f(2) + 0.5 * f(0) = 0.5 * 2 log 2 = log 2.
    CHECK(upper_loss_generic(psi, w, weights, FDivergence::KL) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // chi^2: 0.5 * (2-1)^2/2 + 0.5 * (0-1)^2/2 = 0.5.
    CHECK(upper_loss_generic(psi, w, weights, FDivergence::ChiSquared) ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("clipped exponential saturates without overflow") {
    CHECK(clipped_exp(0.0, 10.0) == doctest::Approx(1.0));
    CHECK(clipped_exp(1.0, 10.0) == doctest::Approx(std::exp(1.0)));
    CHECK(clipped_exp(5.0, 10.0) == doctest::Approx(10.0));
    CHECK(clipped_exp(1000.0, 100.0) == doctest::Approx(100.0));
    CHECK(clipped_exp(-1000.0, 100.0) == doctest::Approx(0.0));
}

TEST_CASE("correction squashing keeps delta_r strictly inside the bound") {
    RewardCorrection c;
    c.bound = 2.0;
    c.raw = Table(1, 3, 0.0);
    c.raw(0, 0) = 100.0;
    c.raw(0, 1) = -100.0;
    c.raw(0, 2) = 0.5;
    c.r_tilde = Table(1, 3, 1.0);
    Table dr = c.delta_r();
    CHECK(dr(0, 0) == doctest::Approx(2.0));
    CHECK(std::abs(dr(0, 0)) < 2.0 + 1e-15);
    CHECK(dr(0, 1) == doctest::Approx(-2.0));
    CHECK(dr(0, 2) == doctest::Approx(2.0 * std::tanh(0.5)));
    Table rh = c.r_hat();
    CHECK(rh(0, 2) == doctest::Approx(1.0 + 2.0 * std::tanh(0.5)));

    std::vector<std::size_t> entries = {0, 2};
    CHECK(mean_correction(c, entries) ==
          doctest::Approx(0.5 * (dr(0, 0) + dr(0, 2))));
    CHECK(mean_correction(c, {}) == doctest::Approx(0.0));
}

TEST_CASE("frozen correction stays at zero through a full solve") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 3;
    spec.goal = Cell{2, 2};
    spec.true_fires.clear();
    spec.fake_fires.clear();
    TabularMDP mdp = build_gridworld(spec, 0.99);
    Table base = gridworld_base_reward(mdp, spec, false);

    Rng rng(1);
    Dataset dataset = rollout(mdp, uniform_policy(mdp), base, 100, 20, rng);
    Dataset expert = rollout(mdp, scripted_expert_policy(mdp, spec), base, 5, 20, rng);

    SolverConfig config;
    config.iterations = 2000;
    config.lr_dr = 0.0;
    config.seed = 3;
    SolverState state = solve(mdp, dataset, expert, config);
    CHECK(table_max_abs_diff(state.correction.raw, Table(mdp.n_states, mdp.n_actions, 0.0)) ==
          0.0);
    CHECK(table_max_abs_diff(state.correction.delta_r(),
                             Table(mdp.n_states, mdp.n_actions, 0.0)) == 0.0);
}

TEST_CASE("short solve respects the bound, the bound chain, and the log cadence") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 3;
    spec.goal = Cell{2, 2};
    spec.true_fires.clear();
    spec.fake_fires.clear();
    TabularMDP mdp = build_gridworld(spec, 0.99);
    Table base = gridworld_base_reward(mdp, spec, false);

    Rng rng(2);
    Dataset dataset = rollout(mdp, uniform_policy(mdp), base, 100, 20, rng);
    Dataset expert = rollout(mdp, scripted_expert_policy(mdp, spec), base, 5, 20, rng);

    SolverConfig config;
    config.iterations = 1200;
    config.log_every = 500;
    SolverState state = solve(mdp, dataset, expert, config);

    // History: initial record plus every 500 steps plus the final iterate.
    REQUIRE(state.history.size() == 4);
    CHECK(state.history[0].iter == 0);
    CHECK(state.history[1].iter == 500);
    CHECK(state.history[2].iter == 1000);
    CHECK(state.history[3].iter == 1200);
    for (const HistoryRecord& rec : state.history) {
        CHECK(std::isfinite(rec.lower_loss));
        CHECK(std::isfinite(rec.upper_loss));
        CHECK(std::isfinite(rec.reward_gap));
    }

    Table dr = state.correction.delta_r();
    for (double x : dr.data) CHECK(std::abs(x) < config.correction_bound);
    CHECK(state.bound_chain_violations == 0);
    CHECK(state.best_gap <= state.history[0].reward_gap);
    CHECK(state.best_iter <= state.iter);
}

TEST_CASE("configuration validation rejects out-of-range settings") {
    SolverConfig ok;
    CHECK_NOTHROW(validate_solver_config(ok));
    SolverConfig bad = ok;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.exp_clip = 1.0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.lr_v = 0.0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.lr_dr = bad.lr_v;  // two-timescale ordering violated
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.lr_dr = -1e-4;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.ratio_epsilon = 0.0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.correction_bound = 0.0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
    bad = ok;
    bad.log_every = 0;
    CHECK_THROWS_AS(validate_solver_config(bad), std::invalid_argument);
}

TEST_CASE("solver data pins values outside the dataset support") {
    GridWorldSpec spec;
    spec.width = 3;
    spec.height = 3;
    spec.goal = Cell{2, 2};
    spec.true_fires.clear();
    spec.fake_fires.clear();
    TabularMDP mdp = build_gridworld(spec, 0.99);
    Table base = gridworld_base_reward(mdp, spec, false);
    Rng rng(4);
    Dataset dataset = rollout(mdp, uniform_policy(mdp), base, 200, 20, rng);
    Dataset expert = rollout(mdp, scripted_expert_policy(mdp, spec), base, 5, 20, rng);

    SolverConfig config;
    SolverData data = prepare_solver_data(mdp, dataset, expert, config);
    // The absorbing terminal never appears as a source state.
    CHECK(data.v_free[mdp.n_states - 1] == 0);
    // Expert entries carry expert mass; other entries do not.
    for (std::size_t idx : data.expert_entries) {
        CHECK(data.d_expert.data[idx] > 0.0);
        CHECK(data.d_dataset.data[idx] > 0.0);
    }
    for (std::size_t idx : data.other_entries) {
        CHECK(data.d_expert.data[idx] == 0.0);
        CHECK(data.d_dataset.data[idx] > 0.0);
    }
    // Gamma mismatch between config and model is rejected.
    SolverConfig wrong = config;
    wrong.gamma = 0.95;
    CHECK_THROWS_AS(prepare_solver_data(mdp, dataset, expert, wrong), std::invalid_argument);
}

}  // TEST_SUITE
