#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "merpo/model.hpp"
#include "test_util.hpp"

using namespace merpo;
using merpo::testutil::random_mdp;
using merpo::testutil::random_policy;

namespace {

OfflineDataset dense_dataset(std::uint64_t seed, std::size_t S, std::size_t A, std::size_t n,
                             bool zero_rewards = false) {
    Rng rng(seed);
    TabularMdp mdp = random_mdp(rng, S, A, 0.9);
    if (zero_rewards)
        mdp.reward = Table2(S, A, 0.0);
    return collect_dataset(mdp, StochasticPolicy::uniform(S, A), n, seed ^ 0xabcd);
}

ModelParams empirical_model(const OfflineDataset& data) {
    ModelParams m(data.n_states, data.n_actions);
    for (std::size_t s = 0; s < data.n_states; ++s)
        for (std::size_t a = 0; a < data.n_actions; ++a) {
            std::int64_t c = data.count_sa(s, a);
            for (std::size_t s2 = 0; s2 < data.n_states; ++s2) {
                double freq = c > 0 ? double(data.count_sas(s, a, s2)) / double(c) : 1.0 / data.n_states;
                m.trans_logits(s, a, s2) = std::log(std::max(freq, 1e-300));
            }
            m.reward_est(s, a) = c > 0 ? data.reward_sum_sa(s, a) / double(c) : 0.0;
        }
    return m;
}

} // namespace

TEST_CASE("nll of the empirical model equals the conditional entropy") {
    OfflineDataset data = dense_dataset(5, 2, 2, 5000);
    // fully covered in the interior of the simplex
    for (auto c : data.count_sas.v)
        REQUIRE(c > 0);

    double entropy = 0.0;
    const double n = double(data.size());
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t s2 = 0; s2 < 2; ++s2) {
                double joint = double(data.count_sas(s, a, s2)) / n;
                double cond = double(data.count_sas(s, a, s2)) / double(data.count_sa(s, a));
                entropy -= joint * std::log(cond);
            }
    // rewards are deterministic per (s,a), so the reward term vanishes
    CHECK(nll(empirical_model(data), data) == doctest::Approx(entropy).epsilon(1e-9));
}

TEST_CASE("uniform model NLL is log k on zero-reward data") {
    OfflineDataset data = dense_dataset(7, 4, 2, 2000, /*zero_rewards=*/true);
    ModelParams uniform(4, 2);
    CHECK(nll(uniform, data) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("eta = 0 leaves the proximal objective equal to the nll") {
    OfflineDataset data = dense_dataset(9, 3, 2, 1000);
    Rng rng(17);
    ModelParams m(3, 2);
    for (double& z : m.trans_logits.v)
        z = rng.next_gaussian();
    MetaModelParams anchor(3, 2);
    CHECK(model_objective(m, data, anchor, 0.0) == nll(m, data));
}

TEST_CASE("fit_task_model with zero steps returns the init bit-exactly") {
    OfflineDataset data = dense_dataset(11, 3, 2, 500);
    Rng rng(23);
    MetaModelParams init(3, 2);
    for (double& z : init.trans_logits.v)
        z = rng.next_gaussian();
    ModelParams out = fit_task_model(data, init, 1.0, 0, 0.5);
    CHECK(out.trans_logits.v == init.trans_logits.v);
    CHECK(out.reward_est.v == init.reward_est.v);
}

TEST_CASE("MLE fit converges to empirical frequencies") {
    OfflineDataset data = dense_dataset(13, 3, 2, 20000);
    MetaModelParams init(3, 2);
    ModelParams fit = fit_task_model(data, init, 0.0, 3000, 0.5);
    Table3 probs = fit.transition_probs();
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t a = 0; a < 2; ++a) {
            REQUIRE(data.count_sa(s, a) > 0);
            double tv = 0.0;
            for (std::size_t s2 = 0; s2 < 3; ++s2)
                tv += std::abs(probs(s, a, s2) -
                               double(data.count_sas(s, a, s2)) / double(data.count_sa(s, a)));
            CHECK(0.5 * tv < 0.05);
        }
}

TEST_CASE("huge eta pins the parameters to the anchor") {
    OfflineDataset data = dense_dataset(15, 3, 2, 1000);
    Rng rng(29);
    MetaModelParams anchor(3, 2);
    for (double& z : anchor.trans_logits.v)
        z = rng.next_gaussian();
    ModelParams out = fit_task_model(data, anchor, 1e6, 50, 1e-7);
    double dist = 0.0;
    for (std::size_t i = 0; i < out.trans_logits.v.size(); ++i)
        dist = std::max(dist, std::abs(out.trans_logits.v[i] - anchor.trans_logits.v[i]));
    for (std::size_t i = 0; i < out.reward_est.v.size(); ++i)
        dist = std::max(dist, std::abs(out.reward_est.v[i] - anchor.reward_est.v[i]));
    CHECK(dist < 1e-3);
}

TEST_CASE("absurd learning rate aborts with a diagnostic") {
    OfflineDataset data = dense_dataset(17, 3, 2, 500);
    MetaModelParams init(3, 2);
    CHECK_THROWS_AS(fit_task_model(data, init, 1.0, 50, 1e300), std::runtime_error);
}

TEST_CASE("analytic gradient matches central differences at 10 random points") {
    OfflineDataset data = dense_dataset(19, 3, 2, 800);
    Rng rng(31);
    const double step = 1e-5;
    for (int point = 0; point < 10; ++point) {
        ModelParams m(3, 2);
        for (double& z : m.trans_logits.v)
            z = 0.7 * rng.next_gaussian();
        for (double& r : m.reward_est.v)
            r = 0.5 * rng.next_gaussian();
        MetaModelParams anchor(3, 2);
        for (double& z : anchor.trans_logits.v)
            z = 0.3 * rng.next_gaussian();
        double eta = rng.next_double();

        ModelParams grad(3, 2);
        model_objective_gradient(m, data, anchor, eta, grad);

        double num_sq = 0.0, diff_sq = 0.0;
        auto probe = [&](double& coord, double analytic) {
            double orig = coord;
            coord = orig + step;
            double hi = model_objective(m, data, anchor, eta);
            coord = orig - step;
            double lo = model_objective(m, data, anchor, eta);
            coord = orig;
            double numeric = (hi - lo) / (2.0 * step);
            num_sq += numeric * numeric;
            diff_sq += (analytic - numeric) * (analytic - numeric);
        };
        for (std::size_t i = 0; i < m.trans_logits.v.size(); ++i)
            probe(m.trans_logits.v[i], grad.trans_logits.v[i]);
        for (std::size_t i = 0; i < m.reward_est.v.size(); ++i)
            probe(m.reward_est.v[i], grad.reward_est.v[i]);
        CHECK(std::sqrt(diff_sq) <= 1e-4 * std::max(std::sqrt(num_sq), 1e-8));
    }
}

TEST_CASE("meta-model training: zero iterations and exact single-task tracking") {
    OfflineDataset data = dense_dataset(21, 3, 2, 2000);
    std::vector<OfflineDataset> tasks = {data};

    MetaModelParams untouched = train_meta_model(tasks, 1.0, 5, 0.5, 0.5, 0);
    CHECK(untouched.trans_logits.v == Table3(3, 2, 3).v);

    // outer_lr = 1 makes phi_{k+1} the adapted theta_k exactly; replicate
    // the recursion independently.
    MetaModelParams phi = train_meta_model(tasks, 0.5, 4, 0.5, 1.0, 3);
    MetaModelParams ref(3, 2);
    for (int k = 0; k < 3; ++k)
        ref = fit_task_model(data, ref, 0.5, 4, 0.5);
    CHECK(phi.trans_logits.v == ref.trans_logits.v);
    CHECK(phi.reward_est.v == ref.reward_est.v);
}

TEST_CASE("identical tasks give the single-task adaptation NLL") {
    OfflineDataset data = dense_dataset(23, 3, 2, 3000);
    std::vector<OfflineDataset> three = {data, data, data};
    std::vector<OfflineDataset> one = {data};
    MetaModelParams phi3 = train_meta_model(three, 1.0, 5, 0.5, 0.5, 10);
    MetaModelParams phi1 = train_meta_model(one, 1.0, 5, 0.5, 0.5, 10);
    double n3 = nll(fit_task_model(data, phi3, 1.0, 5, 0.5), data);
    double n1 = nll(fit_task_model(data, phi1, 1.0, 5, 0.5), data);
    CHECK(std::abs(n3 - n1) < 1e-3);
}

TEST_CASE("ensemble selection orders members by validation NLL") {
    OfflineDataset data = dense_dataset(25, 3, 2, 4000);
    MetaModelParams init(3, 2);

    EnsembleConfig cfg;
    cfg.members = 1;
    cfg.select = 1;
    cfg.seed = 1;
    ModelEnsemble single = fit_ensemble(data, init, cfg);
    CHECK(single.selected == std::vector<std::size_t>{0});

    cfg.members = 3;
    cfg.select = 2;
    ModelEnsemble ens = fit_ensemble(data, init, cfg);
    REQUIRE(ens.selected.size() == 2);
    double worst_selected = std::max(ens.validation_nll[ens.selected[0]],
                                     ens.validation_nll[ens.selected[1]]);
    for (std::size_t m = 0; m < 3; ++m) {
        bool chosen = m == ens.selected[0] || m == ens.selected[1];
        if (!chosen)
            CHECK(worst_selected <= ens.validation_nll[m]);
    }
    CHECK(ens.validation_nll[ens.selected[0]] <= ens.validation_nll[ens.selected[1]]);

    CHECK_THROWS_AS(fit_ensemble(data, init, EnsembleConfig{.members = 2, .select = 3}),
                    std::invalid_argument);
}

TEST_CASE("reward estimates tighten on a dataset-size ladder") {
    Rng rng(27);
    TabularMdp mdp = random_mdp(rng, 3, 2, 0.9);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {1000u, 10000u, 100000u}) {
        OfflineDataset data = collect_dataset(mdp, StochasticPolicy::uniform(3, 2), n, 41);
        ModelParams fit = fit_task_model(data, MetaModelParams(3, 2), 0.0, 2000, 0.5);
        double err = 0.0;
        for (std::size_t i = 0; i < fit.reward_est.v.size(); ++i)
            err = std::max(err, std::abs(fit.reward_est.v[i] - mdp.reward.v[i]));
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("model checkpoint round-trips bit-exactly") {
    Rng rng(43);
    ModelParams m(3, 2);
    for (double& z : m.trans_logits.v)
        z = rng.next_gaussian();
    for (double& r : m.reward_est.v)
        r = rng.next_gaussian();
    std::stringstream ss;
    save_model(m, ss);
    ModelParams back = load_model(ss);
    CHECK(back.trans_logits.v == m.trans_logits.v);
    CHECK(back.reward_est.v == m.reward_est.v);
}
