#pragma once

#include <string>
#include <vector>

#include "merpo/data.hpp"
#include "merpo/rac.hpp"

namespace merpo {

/// Safe-improvement verdict for one (task, policy) triple, with the
/// epsilon-window on alpha and exact returns of all three policies.
struct TheoremReport {
    double nu_pi = 0.0;
    double nu_beta = 0.0;
    double nu_pi_c = 0.0;
    double epsilon = 0.0;
    bool epsilon_defined = false;
    double alpha_window_lo = 0.0;
    double alpha_window_hi = 0.0;
    double alpha_used = 0.0;
    bool condition_met = false;
    std::string reason; // set when epsilon is undefined
    double j_policy = 0.0;
    double j_beta = 0.0;
    double j_meta = 0.0;
    bool improved_over_beta = false;
    bool improved_over_meta = false;
};

TheoremReport check_theorem1(const TabularMdp& mdp, const StochasticPolicy& policy,
                             const StochasticPolicy& pi_beta, const StochasticPolicy& pi_c,
                             const TabularMdp& learnt, const MarginalDist& data_marginal,
                             const RacConfig& cfg);

/// Return-gap bound between an MDP and an f-interpolant of two others,
/// evaluated with exact dynamic-programming quantities.
struct LemmaOneReport {
    double j_interp = 0.0;
    double j_true = 0.0;
    double eta_bound = 0.0;
    bool holds = false;
    // The four bound terms: model-2 dynamics, model-1 dynamics (signed
    // expectation), model-1 reward, model-2 reward.
    double term_dyn2 = 0.0, term_dyn1 = 0.0, term_rew1 = 0.0, term_rew2 = 0.0;
};

LemmaOneReport check_lemma1(const TabularMdp& m, const TabularMdp& m1, const TabularMdp& m2,
                            double f, const StochasticPolicy& policy,
                            double r_max = kDefaultRMax);

/// Concentration constants of the empirical-MDP assumption; they enter the
/// per-pair Bellman-error bound but not the exact lemma check.
struct ConcentrationConstants {
    double c_t = 1.0; // dynamics L1 constant
    double c_r = 1.0; // reward constant
};

/// C_{r,T} R_max / ((1-gamma) sqrt(count)) with C_{r,T} = c_r/R_max + c_t.
double bellman_error_bound(double count, const ConcentrationConstants& constants, double r_max,
                           double gamma);

/// Benchmark setup for the alpha sweep: one task plus a sibling task whose
/// quality-laddered policies stand in for meta-policies of varying quality.
struct SweepSetup {
    TaskFamily family;
    std::size_t dataset_size = 5000;
    double behavior_temperature = 0.08;
    double meta_temperature = 0.25;
    RacConfig rac;
    int rac_iters = 30;
    std::uint64_t seed = 0;
};

struct AlphaSweepRow {
    double alpha = 0.0;
    double mean_return = 0.0;
    double std_return = 0.0;
    std::size_t n_seeds = 0;
};

/// Runs RAC once per (alpha, seed) over the mixed-quality benchmark and
/// reports the exact-return ensemble mean per alpha.
std::vector<AlphaSweepRow> alpha_sweep(const SweepSetup& setup, const std::vector<double>& alphas,
                                       std::size_t n_seeds);

/// One benchmark cell shared by the alpha sweep and the harness suites:
/// task, dataset, behavior policy and a meta-policy of cycled quality.
struct BenchmarkCell {
    TabularMdp task;
    OfflineDataset data;
    StochasticPolicy pi_beta;
    StochasticPolicy pi_c;
    Quality data_quality = Quality::medium;
    Quality meta_quality = Quality::medium;
};

BenchmarkCell make_benchmark_cell(const SweepSetup& setup, std::uint64_t seed);

} // namespace merpo
