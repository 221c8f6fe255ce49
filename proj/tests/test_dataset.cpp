#include <doctest.h>

#include <cstdio>
#include <stdexcept>
#include <string>

#include "rgm/dataset.hpp"
#include "rgm/envs.hpp"
#include "rgm/mdp.hpp"
#include "rgm/rng.hpp"

using namespace rgm;

namespace {

TabularMDP small_grid(GridWorldSpec& spec) {
    spec.width = 3;
    spec.height = 3;
    spec.goal = Cell{2, 2};
    spec.true_fires.clear();
    spec.fake_fires.clear();
    return build_gridworld(spec, 0.99);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("rollouts are deterministic per seed and respect the horizon") {
    GridWorldSpec spec;
    TabularMDP mdp = small_grid(spec);
    Table r = gridworld_base_reward(mdp, spec, false);
    Policy pi = uniform_policy(mdp);

    Rng rng_a(5), rng_b(5), rng_c(6);
    Dataset a = rollout(mdp, pi, r, 20, 15, rng_a);
    Dataset b = rollout(mdp, pi, r, 20, 15, rng_b);
    Dataset c = rollout(mdp, pi, r, 20, 15, rng_c);
    CHECK_NOTHROW(validate_dataset(a));
    CHECK(a.n_episodes() == 20);
    CHECK(a.transitions.size() == b.transitions.size());
    bool identical = true;
    for (std::size_t i = 0; i < a.transitions.size(); ++i) {
        const Transition &x = a.transitions[i], &y = b.transitions[i];
        identical = identical && x.s == y.s && x.a == y.a && x.s_next == y.s_next &&
                    x.r_tilde == y.r_tilde && x.t == y.t && x.done == y.done;
    }
    CHECK(identical);
    bool differs = c.transitions.size() != a.transitions.size();
    for (std::size_t i = 0; !differs && i < a.transitions.size(); ++i)
        differs = a.transitions[i].s != c.transitions[i].s ||
                  a.transitions[i].a != c.transitions[i].a;
    CHECK(differs);

    std::size_t absorbing = mdp.n_states - 1;
    for (std::size_t e = 0; e < a.n_episodes(); ++e) {
        std::size_t lo = a.episode_starts[e];
        std::size_t hi = e + 1 < a.n_episodes() ? a.episode_starts[e + 1] : a.transitions.size();
        CHECK(hi - lo <= 15);
        for (std::size_t i = lo; i < hi; ++i) {
            CHECK(a.transitions[i].t == i - lo);       // consecutive from 0
            CHECK(a.transitions[i].s != absorbing);    // never logged from absorbing
            bool enters_absorbing = a.transitions[i].s_next == absorbing;
            CHECK(a.transitions[i].done == enters_absorbing);
            if (enters_absorbing) CHECK(i == hi - 1);  // episode stops there
        }
    }
}

TEST_CASE("empirical distributions weight steps as configured") {
    // Hand-built dataset on the 2-state swap chain: one episode, two steps,
    // visiting (0,a0) then (1,a0).
    TabularMDP mdp;
    mdp.n_states = 2;
    mdp.n_actions = 1;
    mdp.transition = {0.0, 1.0, 1.0, 0.0};
    mdp.initial_dist = {1.0, 0.0};
    mdp.gamma = 0.5;
    mdp.id = "swap";

    Dataset data;
    data.source_mdp_id = "swap";
    data.episode_starts = {0};
    data.transitions = {{0, 0, 1.0, 1, 0, false}, {1, 0, 2.0, 0, 1, false}};
    validate_dataset(data);

    Table sampling = empirical_distribution(mdp, data, WeightMode::Sampling, mdp.gamma);
    CHECK(sampling(0, 0) == doctest::Approx(0.5));
    CHECK(sampling(1, 0) == doctest::Approx(0.5));

    // Discounted: weights 1 and gamma=0.5, normalized -> (2/3, 1/3).
    Table discounted = empirical_distribution(mdp, data, WeightMode::Discounted, mdp.gamma);
    CHECK(discounted(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(discounted(1, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("tabular and discriminator ratios agree on the dataset support") {
    GridWorldSpec spec;
    TabularMDP mdp = small_grid(spec);
    Table r = gridworld_base_reward(mdp, spec, false);
    Rng rng(12);
    Dataset dataset = rollout(mdp, uniform_policy(mdp), r, 200, 25, rng);
    Dataset expert = rollout(mdp, scripted_expert_policy(mdp, spec), r, 50, 25, rng);
    Table dD = empirical_distribution(mdp, dataset, WeightMode::Sampling, mdp.gamma);
    Table dE = empirical_distribution(mdp, expert, WeightMode::Sampling, mdp.gamma);

    RatioTable direct = tabular_ratio(dE, dD);
    RatioTable bayes = discriminator_ratio(dE, dD);
    for (std::size_t i = 0; i < dD.size(); ++i) {
        if (dD.data[i] == 0.0) {
            CHECK(direct.w.data[i] == 0.0);
            CHECK(bayes.w.data[i] == 0.0);
            continue;
        }
        CHECK(bayes.w.data[i] == doctest::Approx(direct.w.data[i]).epsilon(1e-12));
        CHECK(bayes.log_ratio_DE.data[i] ==
              doctest::Approx(direct.log_ratio_DE.data[i]).epsilon(1e-12));
    }
    // On-support ratio is exact: w * dD == dE.
    for (std::size_t i = 0; i < dD.size(); ++i)
        if (dD.data[i] > 0.0)
            CHECK(direct.w.data[i] * dD.data[i] == doctest::Approx(dE.data[i]).epsilon(1e-12));
}

TEST_CASE("reward normalization standardizes in place") {
    Dataset data;
    data.source_mdp_id = "m";
    data.episode_starts = {0};
    data.transitions = {{0, 0, 0.0, 0, 0, false}, {0, 0, 10.0, 0, 1, false}};
    NormalizationStats stats = normalize_rewards(data);
    CHECK(stats.mean == doctest::Approx(5.0));
    CHECK(stats.stddev == doctest::Approx(5.0));
    CHECK(data.transitions[0].r_tilde == doctest::Approx(-1.0));
    CHECK(data.transitions[1].r_tilde == doctest::Approx(1.0));

    Dataset flat;
    flat.source_mdp_id = "m";
    flat.episode_starts = {0};
    flat.transitions = {{0, 0, 3.0, 0, 0, false}, {0, 0, 3.0, 0, 1, false}};
    NormalizationStats fstats = normalize_rewards(flat);
    CHECK(fstats.mean == doctest::Approx(3.0));
    CHECK(fstats.stddev == doctest::Approx(0.0));
    CHECK(flat.transitions[0].r_tilde == doctest::Approx(0.0));
    CHECK(flat.transitions[1].r_tilde == doctest::Approx(0.0));
}

TEST_CASE("CSV round trip preserves the dataset exactly") {
    Dataset data;
    data.source_mdp_id = "roundtrip";
    data.episode_starts = {0, 2};
    data.transitions = {{0, 1, 1.0 / 3.0, 2, 0, false},
                        {2, 0, -0.12345678901234567, 3, 1, true},
                        {1, 2, 1e-17, 0, 0, false}};
    std::string path = "test_dataset_roundtrip.csv";
    write_dataset_csv(data, path);
    Dataset back = read_dataset_csv(path);
    std::remove(path.c_str());

    REQUIRE(back.transitions.size() == data.transitions.size());
    CHECK(back.episode_starts == data.episode_starts);
    for (std::size_t i = 0; i < data.transitions.size(); ++i) {
        const Transition &x = data.transitions[i], &y = back.transitions[i];
        CHECK(x.s == y.s);
        CHECK(x.a == y.a);
        CHECK(x.r_tilde == y.r_tilde);  // bitwise, full precision
        CHECK(x.s_next == y.s_next);
        CHECK(x.t == y.t);
        CHECK(x.done == y.done);
    }
}

TEST_CASE("merging keeps expert transitions first and checks identities") {
    Dataset expert, rest;
    expert.source_mdp_id = rest.source_mdp_id = "m";
    expert.episode_starts = {0};
    expert.transitions = {{0, 0, 1.0, 1, 0, false}};
    rest.episode_starts = {0, 1};
    rest.transitions = {{1, 0, 2.0, 0, 0, false}, {0, 0, 3.0, 1, 0, false}};

    Dataset merged = merge_datasets(expert, rest);
    CHECK_NOTHROW(validate_dataset(merged));
    CHECK(merged.n_episodes() == 3);
    CHECK(merged.transitions.size() == 3);
    CHECK(merged.transitions[0].r_tilde == 1.0);
    CHECK(merged.transitions[1].r_tilde == 2.0);
    CHECK(merged.episode_starts == std::vector<std::size_t>{0, 1, 2});

    rest.source_mdp_id = "other";
    CHECK_THROWS_AS(merge_datasets(expert, rest), std::invalid_argument);
}

TEST_CASE("dataset validation catches broken bookkeeping") {
    Dataset data;
    data.source_mdp_id = "m";
    data.transitions = {{0, 0, 0.0, 1, 0, false}};
    SUBCASE("episode starts not starting at zero") {
        data.episode_starts = {1};
        CHECK_THROWS_AS(validate_dataset(data), std::invalid_argument);
    }
    SUBCASE("episode start beyond the data") {
        data.episode_starts = {0, 5};
        CHECK_THROWS_AS(validate_dataset(data), std::invalid_argument);
    }
    SUBCASE("transitions without any episode") {
        data.episode_starts = {};
        CHECK_THROWS_AS(validate_dataset(data), std::invalid_argument);
    }
}

}  // TEST_SUITE
