#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "merpo/data.hpp"
#include "merpo/mdp.hpp"
#include "merpo/model.hpp"

namespace merpo {

/// Policy-improvement objective family. tv_theory uses per-state forward-KL
/// regularizers against both anchors and admits a closed-form per-state
/// maximizer; kl_practical ascends the sampled objective (dataset
/// log-likelihood term for the behavior anchor, reverse KL to the meta
/// anchor).
enum class ImproveVariant { tv_theory, kl_practical };

ImproveVariant variant_from_string(const std::string& s);
std::string to_string(ImproveVariant v);

struct RacConfig {
    double alpha = 0.4;  // weight between behavior (alpha) and meta (1-alpha) anchors
    double beta = 1.0;   // conservative penalty weight
    double lambda = 5.0; // regularization strength
    double f = 0.5;      // real-data fraction in the interpolated backup
    double gamma = 0.99;

    int eval_sweeps = 60;
    double eval_tol = 1e-8;
    int improve_steps = 20;
    double improve_lr = 1.0;
    ImproveVariant variant = ImproveVariant::kl_practical;

    bool rho_per_sweep = false; // refresh rho inside each evaluation sweep
    bool no_model = false;      // data-only ablation: empirical backup, rho = d

    int rollout_horizon = 1;
    bool sampled_rollouts = false;
    std::size_t rollout_batch = 0; // 0 -> dataset size

    bool auto_beta = true;
    double beta_tau = 1.0;
    double beta_lr = 0.1;
    bool beta_log_space = true;
    bool auto_lambda = true;
    double d_target = 0.05;
    double lambda_lr = 1.0;

    // Model training for run_rac (plain MLE by default; meta adaptation
    // passes its own proximal settings).
    int model_members = 1;
    int model_select = 1;
    int model_steps = 400;
    double model_lr = 0.5;
    double model_eta = 0.0;

    double r_max = kDefaultRMax;
    double q_clip_scale = 10.0; // Q clamped to +-scale*r_max/(1-gamma)

    std::uint64_t seed = 0;

    double q_bound() const { return q_clip_scale * r_max / (1.0 - gamma); }
    void validate() const;
};

/// Penalty diagnostics for one (policy, dataset, model) triple.
struct PenaltyReport {
    MarginalDist rho; // policy marginal in the learnt MDP
    MarginalDist d;   // dataset marginal
    MarginalDist d_f; // f*d + (1-f)*rho
    double nu = 0.0;  // E_rho[(rho - d)/d_f]
};

PenaltyReport penalty_report(const StochasticPolicy& policy, const MarginalDist& data_marginal,
                             const TabularMdp& learnt, double f);

/// nu for a precomputed rho (no marginal solve).
double penalty_nu(const MarginalDist& rho, const MarginalDist& d, double f);

/// Conservative policy evaluation: iterates the f-interpolated backup of
/// the empirical and learnt MDPs minus the penalty beta*(rho-d)/d_f, up to
/// cfg.eval_sweeps sweeps or max-norm residual < cfg.eval_tol. rho is the
/// policy's discounted marginal in the learnt MDP unless overridden.
/// Throws std::runtime_error if the residual grows for 50 consecutive
/// sweeps.
QTable conservative_evaluate(const StochasticPolicy& policy, const EmpiricalMdp& emp,
                             const TabularMdp& learnt, const RacConfig& cfg,
                             const QTable* warm_start = nullptr,
                             const MarginalDist* rho_override = nullptr);

/// Value of the improvement objective for the configured variant.
double improvement_objective(const StochasticPolicy& pi, const QTable& q,
                             const OfflineDataset& data, const StochasticPolicy& pi_c,
                             const MarginalDist& rho, const RacConfig& cfg);

/// Regularized policy improvement. kl_practical runs cfg.improve_steps
/// backtracking gradient-ascent steps on the objective from `current`;
/// tv_theory returns the closed-form per-state maximizer.
StochasticPolicy improve_policy(const QTable& q, const OfflineDataset& data,
                                const StochasticPolicy& pi_c, const StochasticPolicy& current,
                                const MarginalDist& rho, const RacConfig& cfg);

/// Divergences of a policy to its two anchors, in the family matching the
/// improvement variant (state-weighted KLs for kl_practical, max TV for
/// tv_theory).
struct PolicyDivergences {
    double to_behavior = 0.0;
    double to_meta = 0.0;
};

PolicyDivergences policy_divergences(const StochasticPolicy& pi, const OfflineDataset& data,
                                     const StochasticPolicy& pi_c, const MarginalDist& rho,
                                     ImproveVariant variant);

/// Dual ascent on beta toward the gap threshold tau.
double tune_beta(const QTable& q, const MarginalDist& rho, const MarginalDist& d, double beta,
                 double tau, double lr, bool log_space = false);

/// Dual ascent on lambda toward the target divergence.
double tune_lambda(double div_beta, double div_c, double alpha, double lambda, double d_target,
                   double lr);

struct RacIterRow {
    int iter = 0;
    double nu = 0.0;
    double div_beta = 0.0;
    double div_c = 0.0;
    double beta = 0.0;
    double lambda = 0.0;
    double e_rho_q = 0.0;
};

struct RacResult {
    StochasticPolicy policy;
    QTable q;
    std::vector<RacIterRow> history;
    double final_beta = 0.0;
    double final_lambda = 0.0;
    MarginalDist rho; // from the last iteration
};

/// Optional initialization overrides (meta-policy / meta-Q by default).
struct RacInit {
    const StochasticPolicy* policy = nullptr;
    const QTable* q = nullptr;
    double beta = -1.0;   // <0 -> cfg.beta
    double lambda = -1.0; // <0 -> cfg.lambda
};

/// The alternating evaluate/improve loop over prepared models.
RacResult rac_loop(const OfflineDataset& data, const EmpiricalMdp& emp, const TabularMdp& learnt,
                   const ModelEnsemble* ensemble, const StochasticPolicy& pi_c,
                   const RacConfig& cfg, int iters, const RacInit& init = {});

/// Full within-task optimization: fits the dynamics/reward model from the
/// dataset (MLE, or an ensemble when cfg.model_members > 1), then runs the
/// evaluate/improve loop. alpha=1 ignores the meta anchor (behavior-only
/// regularization); alpha=0 ignores the behavior anchor.
RacResult run_rac(const OfflineDataset& data, const MetaModelParams& model_init,
                  const StochasticPolicy& pi_c, const RacConfig& cfg, int outer_iters,
                  const RacInit& init = {});

} // namespace merpo
