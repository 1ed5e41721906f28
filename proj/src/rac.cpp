#include "merpo/rac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "merpo/rng.hpp"

namespace merpo {

ImproveVariant variant_from_string(const std::string& s) {
    if (s == "tv_theory")
        return ImproveVariant::tv_theory;
    if (s == "kl_practical")
        return ImproveVariant::kl_practical;
    throw std::invalid_argument("unknown improvement variant: " + s);
}

std::string to_string(ImproveVariant v) {
    return v == ImproveVariant::tv_theory ? "tv_theory" : "kl_practical";
}

void RacConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("RacConfig: alpha must lie in [0, 1]");
    if (f <= 0.0 || f >= 1.0)
        throw std::invalid_argument("RacConfig: f must lie strictly inside (0, 1)");
    if (beta < 0.0 || lambda < 0.0)
        throw std::invalid_argument("RacConfig: beta and lambda must be >= 0");
    if (gamma <= 0.0 || gamma >= 1.0)
        throw std::invalid_argument("RacConfig: gamma must lie in (0, 1)");
    if (eval_sweeps < 0 || improve_steps < 0)
        throw std::invalid_argument("RacConfig: negative iteration counts");
    if (model_members < 1 || model_select < 1 || model_select > model_members)
        throw std::invalid_argument("RacConfig: bad ensemble sizes");
}

namespace {

constexpr double kDfFloor = 1e-12;
constexpr double kExpClamp = 50.0;
constexpr double kLambdaTiny = 1e-12;

/// One interpolated backup sweep with a fixed penalty table; returns the
/// max-norm residual.
double penalized_sweep(const StochasticPolicy& policy, const EmpiricalMdp& emp,
                       const TabularMdp& learnt, double f, const Table2& penalty, double q_bound,
                       Table2& q) {
    const std::size_t S = emp.mdp.n_states, A = emp.mdp.n_actions;
    const double gamma = learnt.gamma;
    std::vector<double> v(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        double acc = 0.0;
        for (std::size_t a = 0; a < A; ++a)
            acc += policy.probs(s, a) * q(s, a);
        v[s] = acc;
    }
    double residual = 0.0;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            const double* te = emp.mdp.transition.row(s, a);
            const double* tl = learnt.transition.row(s, a);
            double ev_e = 0.0, ev_l = 0.0;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                ev_e += te[s2] * v[s2];
                ev_l += tl[s2] * v[s2];
            }
            double backup = f * (emp.mdp.reward(s, a) + gamma * ev_e) +
                            (1.0 - f) * (learnt.reward(s, a) + gamma * ev_l);
            double next = std::clamp(backup - penalty(s, a), -q_bound, q_bound);
            residual = std::max(residual, std::abs(next - q(s, a)));
            q(s, a) = next;
        }
    return residual;
}

Table2 penalty_table(const MarginalDist& rho, const MarginalDist& d, double f, double beta) {
    Table2 pen(rho.dist.rows, rho.dist.cols);
    for (std::size_t i = 0; i < pen.v.size(); ++i) {
        double df = f * d.dist.v[i] + (1.0 - f) * rho.dist.v[i];
        pen.v[i] = beta * (rho.dist.v[i] - d.dist.v[i]) / std::max(df, kDfFloor);
    }
    return pen;
}

} // namespace

double penalty_nu(const MarginalDist& rho, const MarginalDist& d, double f) {
    double nu = 0.0;
    for (std::size_t i = 0; i < rho.dist.v.size(); ++i) {
        double r = rho.dist.v[i];
        if (r == 0.0)
            continue;
        double df = f * d.dist.v[i] + (1.0 - f) * r;
        nu += r * (r - d.dist.v[i]) / std::max(df, kDfFloor);
    }
    return nu;
}

PenaltyReport penalty_report(const StochasticPolicy& policy, const MarginalDist& data_marginal,
                             const TabularMdp& learnt, double f) {
    if (f <= 0.0 || f >= 1.0)
        throw std::invalid_argument("penalty_report: f must lie strictly inside (0, 1)");
    PenaltyReport rep;
    rep.rho = discounted_marginal(learnt, policy);
    rep.d = data_marginal;
    rep.d_f = MarginalDist(rep.rho.dist.rows, rep.rho.dist.cols);
    for (std::size_t i = 0; i < rep.d_f.dist.v.size(); ++i)
        rep.d_f.dist.v[i] = f * rep.d.dist.v[i] + (1.0 - f) * rep.rho.dist.v[i];
    rep.nu = penalty_nu(rep.rho, rep.d, f);
    return rep;
}

QTable conservative_evaluate(const StochasticPolicy& policy, const EmpiricalMdp& emp,
                             const TabularMdp& learnt, const RacConfig& cfg,
                             const QTable* warm_start, const MarginalDist* rho_override) {
    cfg.validate();
    const std::size_t S = emp.mdp.n_states, A = emp.mdp.n_actions;
    QTable q = warm_start ? *warm_start : QTable(S, A);

    // The ablation disables the model branch entirely: the backup collapses
    // to the empirical MDP and rho coincides with the data marginal.
    const TabularMdp& model_mdp = cfg.no_model ? emp.mdp : learnt;

    const MarginalDist& d = emp.data_marginal;
    MarginalDist rho;
    if (cfg.no_model)
        rho = d;
    else if (rho_override)
        rho = *rho_override;
    else
        rho = discounted_marginal(model_mdp, policy);
    Table2 pen = penalty_table(rho, d, cfg.f, cfg.beta);

    const double q_bound = cfg.q_bound();
    double prev_residual = std::numeric_limits<double>::infinity();
    int growing = 0;
    for (int sweep = 0; sweep < cfg.eval_sweeps; ++sweep) {
        if (cfg.rho_per_sweep && !rho_override && !cfg.no_model && sweep > 0) {
            rho = discounted_marginal(model_mdp, policy);
            pen = penalty_table(rho, d, cfg.f, cfg.beta);
        }
        double residual = penalized_sweep(policy, emp, model_mdp, cfg.f, pen, q_bound, q.values);
        if (cfg.eval_tol > 0.0 && residual < cfg.eval_tol)
            break;
        growing = residual > prev_residual ? growing + 1 : 0;
        if (growing >= 50)
            throw std::runtime_error("conservative_evaluate: residual diverging");
        prev_residual = residual;
    }
    return q;
}

namespace {

double objective_impl(const StochasticPolicy& pi, const QTable& q, const MarginalDist& d,
                      const StochasticPolicy& pi_beta_hat, const StochasticPolicy& pi_c,
                      const std::vector<double>& rho_state, const RacConfig& cfg) {
    const std::size_t S = pi.n_states(), A = pi.n_actions();
    double val = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        double eq = 0.0;
        for (std::size_t a = 0; a < A; ++a)
            eq += pi.probs(s, a) * q.values(s, a);
        val += rho_state[s] * eq;
    }
    if (cfg.variant == ImproveVariant::kl_practical) {
        if (cfg.alpha > 0.0) {
            double bc = 0.0;
            for (std::size_t s = 0; s < S; ++s)
                for (std::size_t a = 0; a < A; ++a)
                    if (d.dist(s, a) > 0.0)
                        bc += d.dist(s, a) * std::log(pi.probs(s, a));
            val += cfg.lambda * cfg.alpha * bc;
        }
        double kl = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            if (rho_state[s] == 0.0)
                continue;
            double acc = 0.0;
            for (std::size_t a = 0; a < A; ++a)
                acc += pi.probs(s, a) * std::log(pi.probs(s, a) / pi_c.probs(s, a));
            kl += rho_state[s] * acc;
        }
        val -= cfg.lambda * (1.0 - cfg.alpha) * kl;
    } else {
        // Forward-KL surrogate: per-state KL(pi || anchor) against both anchors.
        double reg = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            if (rho_state[s] == 0.0)
                continue;
            double kl_b = 0.0, kl_c = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                double p = pi.probs(s, a);
                kl_b += p * std::log(p / pi_beta_hat.probs(s, a));
                kl_c += p * std::log(p / pi_c.probs(s, a));
            }
            reg += rho_state[s] * (cfg.alpha * kl_b + (1.0 - cfg.alpha) * kl_c);
        }
        val -= cfg.lambda * reg;
    }
    return val;
}

} // namespace

double improvement_objective(const StochasticPolicy& pi, const QTable& q,
                             const OfflineDataset& data, const StochasticPolicy& pi_c,
                             const MarginalDist& rho, const RacConfig& cfg) {
    return objective_impl(pi, q, data.marginal(), data.empirical_behavior(), pi_c,
                          rho.state_marginal(), cfg);
}

StochasticPolicy improve_policy(const QTable& q, const OfflineDataset& data,
                                const StochasticPolicy& pi_c, const StochasticPolicy& current,
                                const MarginalDist& rho, const RacConfig& cfg) {
    cfg.validate();
    const std::size_t S = current.n_states(), A = current.n_actions();
    std::vector<double> rho_state = rho.state_marginal();

    if (cfg.variant == ImproveVariant::tv_theory) {
        StochasticPolicy pi_beta_hat = data.empirical_behavior();
        Table2 logits(S, A);
        for (std::size_t s = 0; s < S; ++s) {
            double q_max = q.values(s, 0);
            for (std::size_t a = 1; a < A; ++a)
                q_max = std::max(q_max, q.values(s, a));
            for (std::size_t a = 0; a < A; ++a) {
                double exponent = std::clamp((q.values(s, a) - q_max) /
                                                 std::max(cfg.lambda, kLambdaTiny),
                                             -kExpClamp, kExpClamp);
                if (cfg.lambda <= kLambdaTiny) {
                    // Greedy limit: the anchors carry zero weight.
                    logits(s, a) = exponent;
                } else {
                    logits(s, a) = cfg.alpha * std::log(pi_beta_hat.probs(s, a)) +
                                   (1.0 - cfg.alpha) * std::log(pi_c.probs(s, a)) + exponent;
                }
            }
        }
        for (double z : logits.v)
            if (!std::isfinite(z))
                throw std::runtime_error("improve_policy: non-finite logits");
        return StochasticPolicy(std::move(logits));
    }

    // kl_practical: backtracking gradient ascent on the logits.
    MarginalDist d = data.marginal();
    std::vector<double> d_state = data.state_marginal();
    StochasticPolicy pi = current;
    double obj = objective_impl(pi, q, d, pi_c, pi_c, rho_state, cfg);

    Table2 grad(S, A);
    for (int step = 0; step < cfg.improve_steps; ++step) {
        for (std::size_t s = 0; s < S; ++s) {
            double v_pi = 0.0, kl_s = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                v_pi += pi.probs(s, a) * q.values(s, a);
                kl_s += pi.probs(s, a) * std::log(pi.probs(s, a) / pi_c.probs(s, a));
            }
            for (std::size_t a = 0; a < A; ++a) {
                double p = pi.probs(s, a);
                double g = rho_state[s] * p * (q.values(s, a) - v_pi);
                g += cfg.lambda * cfg.alpha * (d.dist(s, a) - d_state[s] * p);
                g -= cfg.lambda * (1.0 - cfg.alpha) * rho_state[s] * p *
                     (std::log(p / pi_c.probs(s, a)) - kl_s);
                grad(s, a) = g;
            }
        }
        for (double g : grad.v)
            if (!std::isfinite(g))
                throw std::runtime_error("improve_policy: non-finite gradient");

        double lr = cfg.improve_lr;
        bool accepted = false;
        for (int bt = 0; bt < 40 && !accepted; ++bt, lr *= 0.5) {
            Table2 cand_logits = pi.logits;
            for (std::size_t i = 0; i < cand_logits.v.size(); ++i)
                cand_logits.v[i] += lr * grad.v[i];
            StochasticPolicy cand(std::move(cand_logits));
            double cand_obj = objective_impl(cand, q, d, pi_c, pi_c, rho_state, cfg);
            if (cand_obj >= obj - 1e-12) {
                pi = std::move(cand);
                obj = cand_obj;
                accepted = true;
            }
        }
        if (!accepted)
            break; // gradient step cannot make progress at any scale
    }

    // Re-center logits; the softmax is shift-invariant and this keeps
    // repeated improvement calls from drifting.
    for (std::size_t s = 0; s < S; ++s) {
        double mean = 0.0;
        for (std::size_t a = 0; a < A; ++a)
            mean += pi.logits(s, a);
        mean /= double(A);
        for (std::size_t a = 0; a < A; ++a)
            pi.logits(s, a) -= mean;
    }
    return StochasticPolicy(std::move(pi.logits));
}

PolicyDivergences policy_divergences(const StochasticPolicy& pi, const OfflineDataset& data,
                                     const StochasticPolicy& pi_c, const MarginalDist& rho,
                                     ImproveVariant variant) {
    PolicyDivergences div;
    StochasticPolicy pi_beta_hat = data.empirical_behavior();
    if (variant == ImproveVariant::tv_theory) {
        div.to_behavior = max_tv_distance(pi, pi_beta_hat);
        div.to_meta = max_tv_distance(pi, pi_c);
        return div;
    }
    // Dataset-weighted KL(pi_beta_hat || pi) and rho-weighted KL(pi || pi_c).
    std::vector<double> d_state = data.state_marginal();
    double acc = 0.0;
    for (std::size_t s = 0; s < pi.n_states(); ++s) {
        if (d_state[s] == 0.0)
            continue;
        double kl = 0.0;
        for (std::size_t a = 0; a < pi.n_actions(); ++a) {
            double pb = pi_beta_hat.probs(s, a);
            kl += pb * std::log(pb / pi.probs(s, a));
        }
        acc += d_state[s] * kl;
    }
    div.to_behavior = std::max(acc, 0.0);
    div.to_meta = kl_divergence(pi, pi_c, rho);
    return div;
}

double tune_beta(const QTable& q, const MarginalDist& rho, const MarginalDist& d, double beta,
                 double tau, double lr, bool log_space) {
    double gap = 0.0;
    for (std::size_t i = 0; i < rho.dist.v.size(); ++i)
        gap += (rho.dist.v[i] - d.dist.v[i]) * q.values.v[i];
    if (log_space)
        return beta * std::exp(lr * (gap - tau));
    return std::max(0.0, beta + lr * (gap - tau));
}

double tune_lambda(double div_beta, double div_c, double alpha, double lambda, double d_target,
                   double lr) {
    double step = alpha * (div_beta - d_target) + (1.0 - alpha) * (div_c - d_target);
    return std::max(0.0, lambda + lr * step);
}

RacResult rac_loop(const OfflineDataset& data, const EmpiricalMdp& emp, const TabularMdp& learnt,
                   const ModelEnsemble* ensemble, const StochasticPolicy& pi_c,
                   const RacConfig& cfg, int iters, const RacInit& init) {
    cfg.validate();
    const std::size_t S = emp.mdp.n_states, A = emp.mdp.n_actions;

    RacResult res;
    res.policy = init.policy ? *init.policy : pi_c;
    res.q = init.q ? *init.q : QTable(S, A);
    double beta = init.beta >= 0.0 ? init.beta : cfg.beta;
    double lambda = init.lambda >= 0.0 ? init.lambda : cfg.lambda;
    res.rho = emp.data_marginal;

    Rng rollout_rng = Rng(cfg.seed).derive("rollouts");
    std::vector<double> data_states = data.state_marginal();

    // In sampled mode rollouts draw each step's model uniformly from the
    // selected ensemble members.
    std::vector<Table3> member_probs;
    if (cfg.sampled_rollouts && ensemble != nullptr)
        for (std::size_t idx : ensemble->selected)
            member_probs.push_back(ensemble->members[idx].transition_probs());

    for (int k = 0; k < iters; ++k) {
        // Marginal of the current policy under the model branch, and the
        // effective model-branch MDP for the backup.
        MarginalDist rho;
        const TabularMdp* model_branch = &learnt;
        TabularMdp rollout_mdp;
        if (cfg.no_model) {
            rho = emp.data_marginal;
        } else if (cfg.sampled_rollouts) {
            // Synthetic buffer of h-step rollouts from dataset states; the
            // model branch of the backup uses its empirical frequencies.
            std::size_t batch = cfg.rollout_batch > 0 ? cfg.rollout_batch : data.size();
            Table2 counts(S, A);
            Table3 counts3(S, A, S);
            double total = 0.0;
            for (std::size_t i = 0; i < batch; ++i) {
                std::size_t s = rollout_rng.sample_discrete(data_states);
                for (int h = 0; h < cfg.rollout_horizon; ++h) {
                    std::size_t a = rollout_rng.sample_discrete(std::span<const double>(
                        res.policy.probs.v.data() + s * A, A));
                    const double* row = member_probs.empty()
                                            ? learnt.transition.row(s, a)
                                            : member_probs[rollout_rng.next_index(
                                                               member_probs.size())]
                                                  .row(s, a);
                    std::size_t s2 =
                        rollout_rng.sample_discrete(std::span<const double>(row, S));
                    counts(s, a) += 1.0;
                    counts3(s, a, s2) += 1.0;
                    total += 1.0;
                    s = s2;
                }
            }
            rho = MarginalDist(S, A);
            for (std::size_t i = 0; i < rho.dist.v.size(); ++i)
                rho.dist.v[i] = counts.v[i] / total;
            rollout_mdp = learnt;
            for (std::size_t s = 0; s < S; ++s)
                for (std::size_t a = 0; a < A; ++a)
                    for (std::size_t s2 = 0; s2 < S; ++s2)
                        rollout_mdp.transition(s, a, s2) =
                            counts(s, a) > 0.0 ? counts3(s, a, s2) / counts(s, a)
                                               : 1.0 / double(S);
            model_branch = &rollout_mdp;
        } else {
            rho = discounted_marginal(learnt, res.policy);
        }

        RacConfig step_cfg = cfg;
        if (cfg.auto_beta)
            beta = tune_beta(res.q, rho, emp.data_marginal, beta, cfg.beta_tau, cfg.beta_lr,
                             cfg.beta_log_space);
        step_cfg.beta = beta;
        step_cfg.lambda = lambda;

        res.q = conservative_evaluate(res.policy, emp, *model_branch, step_cfg, &res.q, &rho);
        res.policy = improve_policy(res.q, data, pi_c, res.policy, rho, step_cfg);

        PolicyDivergences div = policy_divergences(res.policy, data, pi_c, rho, cfg.variant);
        if (cfg.auto_lambda)
            lambda = tune_lambda(div.to_behavior, div.to_meta, cfg.alpha, lambda, cfg.d_target,
                                 cfg.lambda_lr);

        RacIterRow row;
        row.iter = k;
        row.nu = penalty_nu(rho, emp.data_marginal, cfg.f);
        row.div_beta = div.to_behavior;
        row.div_c = div.to_meta;
        row.beta = beta;
        row.lambda = lambda;
        double erq = 0.0;
        for (std::size_t i = 0; i < rho.dist.v.size(); ++i)
            erq += rho.dist.v[i] * res.q.values.v[i];
        row.e_rho_q = erq;
        res.history.push_back(row);
        res.rho = std::move(rho);
    }
    res.final_beta = beta;
    res.final_lambda = lambda;
    return res;
}

RacResult run_rac(const OfflineDataset& data, const MetaModelParams& model_init,
                  const StochasticPolicy& pi_c, const RacConfig& cfg, int outer_iters,
                  const RacInit& init) {
    cfg.validate();
    EmpiricalMdp emp = induce_empirical(data, cfg.gamma);

    ModelParams model;
    ModelEnsemble ens;
    const ModelEnsemble* ens_ptr = nullptr;
    if (cfg.model_members > 1) {
        EnsembleConfig ecfg;
        ecfg.members = cfg.model_members;
        ecfg.select = cfg.model_select;
        ecfg.eta = cfg.model_eta;
        ecfg.steps = cfg.model_steps;
        ecfg.lr = cfg.model_lr;
        ecfg.seed = Rng(cfg.seed).derive("model").next_u64();
        ens = fit_ensemble(data, model_init, ecfg);
        model = ens.best();
        ens_ptr = &ens;
    } else {
        model = fit_task_model(data, model_init, cfg.model_eta, cfg.model_steps, cfg.model_lr);
    }
    TabularMdp learnt = model.to_mdp(cfg.gamma, data.state_marginal(), cfg.r_max);

    return rac_loop(data, emp, learnt, ens_ptr, pi_c, cfg, outer_iters, init);
}

} // namespace merpo
