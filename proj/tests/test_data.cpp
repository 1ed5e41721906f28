#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "merpo/data.hpp"
#include "merpo/rng.hpp"
#include "test_util.hpp"

using namespace merpo;

TEST_CASE("reward_flip pairs share dynamics with negated movement rewards") {
    TaskFamily fam;
    fam.kind = FamilyKind::reward_flip;
    fam.base_size = 6;
    fam.seed = 5;
    auto tasks = sample_tasks(fam, 2);
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].transition.v == tasks[1].transition.v);
    for (std::size_t i = 0; i < tasks[0].reward.v.size(); ++i)
        CHECK(tasks[0].reward.v[i] == -tasks[1].reward.v[i]);
}

TEST_CASE("gridworld_wind with zero perturbation collapses to one task") {
    TaskFamily fam;
    fam.kind = FamilyKind::gridworld_wind;
    fam.base_size = 3;
    fam.perturb_lo = 0.0;
    fam.perturb_hi = 0.0;
    fam.seed = 9;
    auto tasks = sample_tasks(fam, 5);
    for (std::size_t i = 1; i < tasks.size(); ++i) {
        CHECK(tasks[i].transition.v == tasks[0].transition.v);
        CHECK(tasks[i].reward.v == tasks[0].reward.v);
    }
}

TEST_CASE("gridworld_wind 40 train / 10 test split") {
    TaskFamily fam;
    fam.kind = FamilyKind::gridworld_wind;
    fam.base_size = 3;
    fam.seed = 21;
    auto train = sample_tasks(fam, 40);
    TaskFamily test_fam = fam;
    test_fam.seed = 22;
    auto test = sample_tasks(test_fam, 10);
    CHECK(train.size() == 40);
    CHECK(test.size() == 10);
    // transitions differ only via the wind: rewards are shared
    for (const auto& t : train)
        CHECK(t.reward.v == train[0].reward.v);
}

TEST_CASE("behavior policy quality ladder") {
    TaskFamily fam;
    fam.kind = FamilyKind::gridworld_wind;
    fam.base_size = 3;
    fam.seed = 33;
    TabularMdp mdp = sample_tasks(fam, 1)[0];

    StochasticPolicy rnd = make_behavior_policy(mdp, Quality::random, 0.1);
    for (double p : rnd.probs.v)
        CHECK(p == doctest::Approx(1.0 / double(mdp.n_actions)));

    // near-greedy at the clipped temperature floor: the mass concentrates
    // on the optimal-action set (ties split between equal maximizers)
    StochasticPolicy expert = make_behavior_policy(mdp, Quality::expert, 1e-9);
    QTable qstar = value_iteration(mdp);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        double best = qstar.values(s, 0);
        for (std::size_t a = 1; a < mdp.n_actions; ++a)
            best = std::max(best, qstar.values(s, a));
        // gaps much larger than the 1e-3 temperature floor get wiped out
        double greedy_mass = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            if (qstar.values(s, a) > best - 0.05)
                greedy_mass += expert.probs(s, a);
        CHECK(greedy_mass > 0.95);
    }

    CHECK_THROWS_AS(make_behavior_policy(mdp, Quality::expert, 0.0), std::invalid_argument);
}

TEST_CASE("quality ladder orders returns on 50 tasks") {
    int expert_beats_medium = 0, medium_beats_random = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        TaskFamily fam;
        fam.kind = seed % 2 == 0 ? FamilyKind::gridworld_wind : FamilyKind::point_grid_goal;
        fam.base_size = 3;
        fam.gamma = 0.95;
        fam.seed = 100 + seed;
        TabularMdp mdp = sample_tasks(fam, 1)[0];
        double je = expected_return(mdp, make_behavior_policy(mdp, Quality::expert, 0.05));
        double jm = expected_return(mdp, make_behavior_policy(mdp, Quality::medium, 0.05));
        double jr = expected_return(mdp, make_behavior_policy(mdp, Quality::random, 0.05));
        if (je > jm)
            ++expert_beats_medium;
        if (jm > jr)
            ++medium_beats_random;
    }
    CHECK(expert_beats_medium == 50);
    CHECK(medium_beats_random == 50);
}

TEST_CASE("collect_dataset basics and frequency oracle") {
    Rng rng(55);
    TabularMdp mdp = testutil::random_mdp(rng, 4, 2, 0.9);
    StochasticPolicy beta = testutil::random_policy(rng, 4, 2);

    OfflineDataset one = collect_dataset(mdp, beta, 1, 7);
    CHECK(one.size() == 1);
    std::int64_t total = 0;
    for (auto c : one.count_sa.v)
        total += c;
    CHECK(total == 1);

    const std::size_t n = 1000000;
    OfflineDataset big = collect_dataset(mdp, beta, n, 7);
    MarginalDist d = discounted_marginal(mdp, beta);
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            double p = d.dist(s, a);
            double freq = double(big.count_sa(s, a)) / double(n);
            double se = std::sqrt(p * (1.0 - p) / double(n));
            CHECK(std::abs(freq - p) < 3.0 * se + 1e-9);
        }
}

TEST_CASE("deterministic MDP gives single successor per visited pair") {
    TabularMdp mdp;
    mdp.n_states = 3;
    mdp.n_actions = 2;
    mdp.gamma = 0.9;
    mdp.transition = Table3(3, 2, 3);
    for (std::size_t s = 0; s < 3; ++s) {
        mdp.transition(s, 0, (s + 1) % 3) = 1.0;
        mdp.transition(s, 1, s) = 1.0;
    }
    mdp.reward = Table2(3, 2, 0.1);
    mdp.init_dist = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    mdp.validate();

    OfflineDataset data = collect_dataset(mdp, StochasticPolicy::uniform(3, 2), 500, 3);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            if (data.count_sa(s, a) == 0)
                continue;
            int nonzero = 0;
            for (std::size_t s2 = 0; s2 < 3; ++s2)
                if (data.count_sas(s, a, s2) > 0)
                    ++nonzero;
            CHECK(nonzero == 1);
        }
}

TEST_CASE("counts are exact sufficient statistics") {
    Rng rng(59);
    TabularMdp mdp = testutil::random_mdp(rng, 5, 3, 0.9);
    StochasticPolicy beta = testutil::random_policy(rng, 5, 3);
    OfflineDataset data = collect_dataset(mdp, beta, 2000, 11);

    ITable2 csa = data.count_sa;
    ITable3 csas = data.count_sas;
    Table2 rsum = data.reward_sum_sa;
    data.rebuild_counts();
    CHECK(data.count_sa == csa);
    CHECK(data.count_sas == csas);
    CHECK(data.reward_sum_sa.v == rsum.v);

    // count_sa marginalizes count_sas
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t a = 0; a < 3; ++a) {
            std::int64_t acc = 0;
            for (std::size_t s2 = 0; s2 < 5; ++s2)
                acc += data.count_sas(s, a, s2);
            CHECK(acc == data.count_sa(s, a));
        }
}

TEST_CASE("induce_empirical handles single-tuple and floors unvisited counts") {
    OfflineDataset data;
    data.task_id = "tiny";
    data.n_states = 3;
    data.n_actions = 2;
    data.transitions = {{1, 0, 0.25, 2}};
    data.rebuild_counts();

    EmpiricalMdp emp = induce_empirical(data, 0.9);
    CHECK(emp.supported(1, 0));
    CHECK(emp.mdp.transition(1, 0, 2) == 1.0);
    CHECK(emp.mdp.reward(1, 0) == 0.25);
    CHECK(emp.effective_count(1, 0) == 1.0);
    int supported = 0;
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            if (emp.supported(s, a)) {
                ++supported;
                continue;
            }
            CHECK(emp.effective_count(s, a) == 0.5);
            CHECK(emp.mdp.reward(s, a) == 0.0);
            for (std::size_t s2 = 0; s2 < 3; ++s2)
                CHECK(emp.mdp.transition(s, a, s2) == doctest::Approx(1.0 / 3.0));
        }
    CHECK(supported == 1);

    OfflineDataset empty;
    empty.n_states = 2;
    empty.n_actions = 2;
    CHECK_THROWS_AS(induce_empirical(empty, 0.9), std::invalid_argument);
}

TEST_CASE("empirical transitions converge on a ladder of dataset sizes") {
    Rng rng(61);
    TabularMdp mdp = testutil::random_mdp(rng, 4, 2, 0.9);
    StochasticPolicy beta = StochasticPolicy::uniform(4, 2);

    double prev_err = std::numeric_limits<double>::infinity();
    for (std::size_t n : {1000u, 10000u, 100000u}) {
        OfflineDataset data = collect_dataset(mdp, beta, n, 77);
        EmpiricalMdp emp = induce_empirical(data, 0.9);
        double err = 0.0;
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t a = 0; a < 2; ++a) {
                if (!emp.supported(s, a))
                    continue;
                for (std::size_t s2 = 0; s2 < 4; ++s2)
                    err = std::max(err, std::abs(emp.mdp.transition(s, a, s2) -
                                                 mdp.transition(s, a, s2)));
            }
        CHECK(err <= prev_err);
        prev_err = err;
    }
    CHECK(prev_err < 0.05);
}

TEST_CASE("empirical behavior is uniform on unsupported states") {
    OfflineDataset data;
    data.n_states = 3;
    data.n_actions = 2;
    data.transitions = {{0, 1, 0.5, 1}, {0, 1, 0.5, 2}};
    data.rebuild_counts();
    StochasticPolicy hat = data.empirical_behavior();
    CHECK(hat.probs(0, 1) > 0.99);
    CHECK(hat.probs(1, 0) == doctest::Approx(0.5));
    CHECK(hat.probs(2, 0) == doctest::Approx(0.5));
}

TEST_CASE("dataset file round-trip preserves tuples and counts") {
    Rng rng(67);
    TabularMdp mdp = testutil::random_mdp(rng, 4, 2, 0.9);
    OfflineDataset data = collect_dataset(mdp, StochasticPolicy::uniform(4, 2), 300, 13);
    data.task_id = "roundtrip";
    data.quality = Quality::expert;

    std::stringstream ss;
    save_dataset(data, ss);
    OfflineDataset back = load_dataset(ss);
    CHECK(back.task_id == data.task_id);
    CHECK(back.quality == data.quality);
    CHECK(back.seed == data.seed);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back.transitions[i].s == data.transitions[i].s);
        CHECK(back.transitions[i].a == data.transitions[i].a);
        CHECK(back.transitions[i].r == data.transitions[i].r);
        CHECK(back.transitions[i].next == data.transitions[i].next);
    }
    CHECK(back.count_sa == data.count_sa);
    CHECK(back.count_sas == data.count_sas);
}

TEST_CASE("dataset generation is deterministic per seed") {
    Rng rng(71);
    TabularMdp mdp = testutil::random_mdp(rng, 4, 2, 0.9);
    StochasticPolicy beta = testutil::random_policy(rng, 4, 2);
    OfflineDataset a = collect_dataset(mdp, beta, 500, 99);
    OfflineDataset b = collect_dataset(mdp, beta, 500, 99);
    CHECK(a.count_sas == b.count_sas);
    OfflineDataset c = collect_dataset(mdp, beta, 500, 100);
    CHECK(a.count_sas.v != c.count_sas.v);
}
