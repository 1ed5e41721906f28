#include "merpo/theory.hpp"

#include <algorithm>
#include <cmath>

#include "merpo/rng.hpp"

namespace merpo {

TheoremReport check_theorem1(const TabularMdp& mdp, const StochasticPolicy& policy,
                             const StochasticPolicy& pi_beta, const StochasticPolicy& pi_c,
                             const TabularMdp& learnt, const MarginalDist& data_marginal,
                             const RacConfig& cfg) {
    TheoremReport rep;
    rep.alpha_used = cfg.alpha;
    rep.nu_pi = penalty_report(policy, data_marginal, learnt, cfg.f).nu;
    rep.nu_beta = penalty_report(pi_beta, data_marginal, learnt, cfg.f).nu;
    rep.nu_pi_c = penalty_report(pi_c, data_marginal, learnt, cfg.f).nu;

    double d_tv = max_tv_distance(policy, pi_beta);
    if (d_tv < 1e-12) {
        rep.epsilon_defined = false;
        rep.condition_met = false;
        rep.reason = "D(pi, pi_beta) below 1e-12; epsilon undefined";
    } else if (cfg.lambda <= 0.0) {
        rep.epsilon_defined = false;
        rep.condition_met = false;
        rep.reason = "lambda is zero; epsilon undefined";
    } else {
        rep.epsilon_defined = true;
        rep.epsilon = cfg.beta * (rep.nu_pi - rep.nu_beta) /
                      (2.0 * cfg.lambda * (1.0 - cfg.gamma) * d_tv);
        rep.alpha_window_lo = std::max(0.5 - rep.epsilon, 0.0);
        rep.alpha_window_hi = 0.5;
        rep.condition_met = rep.nu_pi - rep.nu_beta > 0.0 &&
                            cfg.alpha > rep.alpha_window_lo && cfg.alpha < rep.alpha_window_hi;
    }

    rep.j_policy = expected_return(mdp, policy);
    rep.j_beta = expected_return(mdp, pi_beta);
    rep.j_meta = expected_return(mdp, pi_c);
    rep.improved_over_beta = rep.j_policy >= rep.j_beta;
    rep.improved_over_meta = rep.j_policy >= rep.j_meta;
    return rep;
}

namespace {

/// max over (s,a) of the TV distance between next-state rows.
double max_dynamics_tv(const TabularMdp& a, const TabularMdp& b) {
    double worst = 0.0;
    for (std::size_t s = 0; s < a.n_states; ++s)
        for (std::size_t act = 0; act < a.n_actions; ++act) {
            const double* ra = a.transition.row(s, act);
            const double* rb = b.transition.row(s, act);
            double tv = 0.0;
            for (std::size_t s2 = 0; s2 < a.n_states; ++s2)
                tv += std::abs(ra[s2] - rb[s2]);
            worst = std::max(worst, 0.5 * tv);
        }
    return worst;
}

} // namespace

LemmaOneReport check_lemma1(const TabularMdp& m, const TabularMdp& m1, const TabularMdp& m2,
                            double f, const StochasticPolicy& policy, double r_max) {
    if (f <= 0.0 || f >= 1.0)
        throw std::invalid_argument("check_lemma1: f must lie strictly inside (0, 1)");
    LemmaOneReport rep;
    const double gamma = m.gamma;

    QTable q_m = exact_q(m, policy);
    rep.j_true = expected_return_from_q(m, policy, q_m);
    TabularMdp mf = f_interpolant(m1, m2, f);
    mf.init_dist = m.init_dist; // returns compare under the true start distribution
    rep.j_interp = expected_return(mf, policy);

    MarginalDist d_m = discounted_marginal(m, policy);

    // V under the true MDP, for the signed model-1 dynamics term.
    std::vector<double> v(m.n_states, 0.0);
    for (std::size_t s = 0; s < m.n_states; ++s)
        for (std::size_t a = 0; a < m.n_actions; ++a)
            v[s] += policy.probs(s, a) * q_m.values(s, a);

    double dyn1_expect = 0.0, rew1 = 0.0, rew2 = 0.0;
    for (std::size_t s = 0; s < m.n_states; ++s)
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            double w = d_m.dist(s, a);
            if (w == 0.0)
                continue;
            const double* tm = m.transition.row(s, a);
            const double* t1 = m1.transition.row(s, a);
            double gap = 0.0;
            for (std::size_t s2 = 0; s2 < m.n_states; ++s2)
                gap += (tm[s2] - t1[s2]) * v[s2];
            dyn1_expect += w * gap;
            rew1 += w * std::abs(m1.reward(s, a) - m.reward(s, a));
            rew2 += w * std::abs(m2.reward(s, a) - m.reward(s, a));
        }

    rep.term_dyn2 = 2.0 * gamma * (1.0 - f) / ((1.0 - gamma) * (1.0 - gamma)) * r_max *
                    max_dynamics_tv(m2, m);
    rep.term_dyn1 = gamma * f / (1.0 - gamma) * std::abs(dyn1_expect);
    rep.term_rew1 = f / (1.0 - gamma) * rew1;
    rep.term_rew2 = (1.0 - f) / (1.0 - gamma) * rew2;
    rep.eta_bound = rep.term_dyn2 + rep.term_dyn1 + rep.term_rew1 + rep.term_rew2;
    rep.holds = std::abs(rep.j_interp - rep.j_true) <= rep.eta_bound + 1e-9;
    return rep;
}

double bellman_error_bound(double count, const ConcentrationConstants& constants, double r_max,
                           double gamma) {
    if (count <= 0.0)
        throw std::invalid_argument("bellman_error_bound: count must be positive");
    double c_rt = constants.c_r / r_max + constants.c_t;
    return c_rt * r_max / ((1.0 - gamma) * std::sqrt(count));
}

BenchmarkCell make_benchmark_cell(const SweepSetup& setup, std::uint64_t seed) {
    BenchmarkCell cell;
    TaskFamily fam = setup.family;
    fam.seed = Rng(setup.seed).derive("bench").derive(seed).next_u64();
    std::vector<TabularMdp> pair = sample_tasks(fam, 2);
    cell.task = std::move(pair[0]);
    const TabularMdp& sibling = pair[1];

    // Data quality cycles {medium, expert}; meta quality cycles
    // {random, medium, expert} out of phase, so the ensemble mixes cells
    // where each anchor is the better one.
    static const Quality data_cycle[2] = {Quality::medium, Quality::expert};
    static const Quality meta_cycle[3] = {Quality::random, Quality::medium, Quality::expert};
    cell.data_quality = data_cycle[seed % 2];
    cell.meta_quality = meta_cycle[seed % 3];

    cell.pi_beta = make_behavior_policy(cell.task, cell.data_quality, setup.behavior_temperature);
    // The stand-in meta-policy comes from the sibling task, the way a
    // family-level policy would: good on average, not task-optimal.
    cell.pi_c = make_behavior_policy(sibling, cell.meta_quality, setup.meta_temperature);
    cell.data = collect_dataset(cell.task, cell.pi_beta, setup.dataset_size, fam.seed ^ seed);
    cell.data.task_id = to_string(setup.family.kind) + "-bench";
    cell.data.quality = cell.data_quality;
    return cell;
}

std::vector<AlphaSweepRow> alpha_sweep(const SweepSetup& setup, const std::vector<double>& alphas,
                                       std::size_t n_seeds) {
    std::vector<AlphaSweepRow> rows;
    for (double alpha : alphas) {
        AlphaSweepRow row;
        row.alpha = alpha;
        row.n_seeds = n_seeds;
        std::vector<double> returns;
        for (std::size_t seed = 0; seed < n_seeds; ++seed) {
            BenchmarkCell cell = make_benchmark_cell(setup, seed);
            RacConfig cfg = setup.rac;
            cfg.gamma = cell.task.gamma;
            cfg.alpha = alpha;
            cfg.seed = Rng(setup.seed).derive("sweep").derive(seed).next_u64();
            MetaModelParams init(cell.task.n_states, cell.task.n_actions);
            RacResult rr = run_rac(cell.data, init, cell.pi_c, cfg, setup.rac_iters);
            returns.push_back(expected_return(cell.task, rr.policy));
        }
        double mean = 0.0;
        for (double r : returns)
            mean += r;
        mean /= double(returns.size());
        double var = 0.0;
        for (double r : returns)
            var += (r - mean) * (r - mean);
        row.mean_return = mean;
        row.std_return = returns.size() > 1 ? std::sqrt(var / double(returns.size() - 1)) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

} // namespace merpo
