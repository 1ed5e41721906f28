#include "merpo/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "merpo/rng.hpp"
#include "merpo/serialize.hpp"

namespace merpo {

void MerpoConfig::validate() const {
    if (task_batch_size == 0)
        throw std::invalid_argument("MerpoConfig: task_batch_size must be >= 1");
    if (alpha_lo < 0.0 || alpha_hi > 1.0 || alpha_lo > alpha_hi)
        throw std::invalid_argument("MerpoConfig: alpha bounds must satisfy 0 <= lo <= hi <= 1");
    if (alpha_init < alpha_lo || alpha_init > alpha_hi)
        throw std::invalid_argument("MerpoConfig: alpha_init outside alpha bounds");
    if (inner_steps < 0 || outer_iters < 0 || model_adapt_steps < 0)
        throw std::invalid_argument("MerpoConfig: negative iteration counts");
    rac.validate();
}

namespace {

/// Batch-mean weighted KL objective the meta step descends.
double meta_kl_objective(const StochasticPolicy& pi_c, const std::vector<TaskResult>& results) {
    double acc = 0.0;
    for (const TaskResult& tr : results) {
        std::vector<double> w = tr.rho.state_marginal();
        double task_kl = 0.0;
        for (std::size_t s = 0; s < pi_c.n_states(); ++s) {
            if (w[s] == 0.0)
                continue;
            double kl = 0.0;
            for (std::size_t a = 0; a < pi_c.n_actions(); ++a) {
                double p = tr.policy.probs(s, a);
                kl += p * std::log(p / pi_c.probs(s, a));
            }
            task_kl += w[s] * kl;
        }
        acc += tr.lambda * (1.0 - tr.alpha) * task_kl;
    }
    return acc / double(results.size());
}

} // namespace

StochasticPolicy meta_policy_step(const MetaState& state,
                                  const std::vector<TaskResult>& task_results,
                                  const MerpoConfig& cfg) {
    if (task_results.empty())
        throw std::invalid_argument("meta_policy_step: empty batch");
    const std::size_t S = state.pi_c.n_states(), A = state.pi_c.n_actions();

    Table2 grad(S, A); // d objective / d logits
    for (const TaskResult& tr : task_results) {
        std::vector<double> w = tr.rho.state_marginal();
        double coef = tr.lambda * (1.0 - tr.alpha) / double(task_results.size());
        for (std::size_t s = 0; s < S; ++s) {
            if (w[s] == 0.0)
                continue;
            for (std::size_t a = 0; a < A; ++a)
                grad(s, a) += coef * w[s] * (state.pi_c.probs(s, a) - tr.policy.probs(s, a));
        }
    }

    double before = meta_kl_objective(state.pi_c, task_results);
    double lr = cfg.outer_lr;
    for (int bt = 0; bt < 40; ++bt, lr *= 0.5) {
        Table2 cand_logits = state.pi_c.logits;
        for (std::size_t i = 0; i < cand_logits.v.size(); ++i)
            cand_logits.v[i] -= lr * grad.v[i];
        StochasticPolicy cand(std::move(cand_logits));
        if (meta_kl_objective(cand, task_results) <= before)
            return cand;
    }
    return state.pi_c; // zero gradient; nothing to do
}

QTable meta_q_step(const QTable& q_meta, const std::vector<QTable>& task_qs, double xi_q) {
    if (task_qs.empty())
        throw std::invalid_argument("meta_q_step: empty batch");
    QTable out = q_meta;
    double inv = 1.0 / double(task_qs.size());
    for (std::size_t i = 0; i < out.values.v.size(); ++i) {
        double mean = 0.0;
        for (const QTable& q : task_qs)
            mean += q.values.v[i];
        mean *= inv;
        out.values.v[i] = q_meta.values.v[i] - xi_q * (q_meta.values.v[i] - mean);
    }
    return out;
}

double adapt_alpha(double alpha, double div_beta, double div_c, double lr, double lo, double hi) {
    return std::clamp(alpha + lr * (div_beta - div_c), lo, hi);
}

MetaState train_merpo(const std::vector<OfflineDataset>& datasets,
                      const MetaModelParams& meta_model, const MerpoConfig& cfg,
                      const MetaCallback& callback) {
    cfg.validate();
    if (datasets.empty())
        throw std::invalid_argument("train_merpo: no datasets");
    const std::size_t S = datasets[0].n_states, A = datasets[0].n_actions;
    const std::size_t N = datasets.size();

    MetaState st;
    st.pi_c = StochasticPolicy::uniform(S, A);
    st.q_meta = QTable(S, A);
    st.alpha_per_task.assign(N, cfg.alpha_init);
    st.iter = 0;

    // Task models depend only on (dataset, meta-model); adapt each once.
    std::vector<ModelParams> task_models(N);
    std::vector<EmpiricalMdp> task_emps(N);
    std::vector<TabularMdp> task_learnt(N);
    std::vector<bool> prepared(N, false);
    auto prepare_task = [&](std::size_t n) {
        if (prepared[n])
            return;
        task_models[n] = fit_task_model(datasets[n], meta_model, cfg.model_eta,
                                        cfg.model_adapt_steps, cfg.model_lr);
        task_emps[n] = induce_empirical(datasets[n], cfg.rac.gamma);
        task_learnt[n] = task_models[n].to_mdp(cfg.rac.gamma, datasets[n].state_marginal(),
                                               cfg.rac.r_max);
        prepared[n] = true;
    };

    std::vector<double> beta_per_task(N, cfg.rac.beta);
    std::vector<double> lambda_per_task(N, cfg.rac.lambda);

    Rng batch_rng = Rng(cfg.seed).derive("batches");
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    batch_rng.shuffle(order);
    std::size_t cursor = 0;

    for (int k = 0; k < cfg.outer_iters; ++k) {
        std::vector<std::size_t> batch;
        for (std::size_t i = 0; i < std::min(cfg.task_batch_size, N); ++i) {
            if (cursor == N) {
                batch_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        std::sort(batch.begin(), batch.end()); // fixed reduction order

        std::vector<TaskResult> results;
        std::vector<QTable> batch_qs;
        for (std::size_t n : batch) {
            prepare_task(n);
            RacConfig task_cfg = cfg.rac;
            task_cfg.alpha = st.alpha_per_task[n];
            task_cfg.seed = Rng(cfg.seed).derive("task").derive(n).next_u64();

            RacInit init;
            init.policy = &st.pi_c;
            if (cfg.init_task_q_from_meta)
                init.q = &st.q_meta;
            if (cfg.persist_duals) {
                init.beta = beta_per_task[n];
                init.lambda = lambda_per_task[n];
            }

            RacResult rr = rac_loop(datasets[n], task_emps[n], task_learnt[n], nullptr, st.pi_c,
                                    task_cfg, cfg.inner_steps, init);
            if (cfg.persist_duals) {
                beta_per_task[n] = rr.final_beta;
                lambda_per_task[n] = rr.final_lambda;
            }

            TaskResult tr;
            tr.task_index = n;
            tr.policy = std::move(rr.policy);
            tr.q = rr.q;
            tr.rho = std::move(rr.rho);
            tr.data = &datasets[n];
            tr.alpha = st.alpha_per_task[n];
            tr.beta = rr.final_beta;
            tr.lambda = rr.final_lambda;
            if (!rr.history.empty()) {
                tr.div_beta = rr.history.back().div_beta;
                tr.div_c = rr.history.back().div_c;
            }
            if (cfg.adaptive_alpha)
                st.alpha_per_task[n] = adapt_alpha(st.alpha_per_task[n], tr.div_beta, tr.div_c,
                                                   cfg.alpha_lr, cfg.alpha_lo, cfg.alpha_hi);
            batch_qs.push_back(tr.q);
            results.push_back(std::move(tr));
        }

        st.pi_c = meta_policy_step(st, results, cfg);
        st.q_meta = meta_q_step(st.q_meta, batch_qs, cfg.meta_q_lr);
        st.iter = k + 1;
        if (callback)
            callback(st, results);
    }
    return st;
}

StochasticPolicy adapt_new_task(const MetaState& state, const MetaModelParams& meta_model,
                                const OfflineDataset& data, const MerpoConfig& cfg, int steps) {
    cfg.validate();
    if (steps == 0)
        return state.pi_c;
    ModelParams model = fit_task_model(data, meta_model, cfg.model_eta, cfg.model_adapt_steps,
                                       cfg.model_lr);
    EmpiricalMdp emp = induce_empirical(data, cfg.rac.gamma);
    TabularMdp learnt = model.to_mdp(cfg.rac.gamma, data.state_marginal(), cfg.rac.r_max);

    RacConfig task_cfg = cfg.rac;
    task_cfg.alpha = cfg.alpha_init;
    task_cfg.seed = Rng(cfg.seed).derive("adapt").next_u64();
    RacInit init;
    init.policy = &state.pi_c;
    if (cfg.init_task_q_from_meta)
        init.q = &state.q_meta;
    return rac_loop(data, emp, learnt, nullptr, state.pi_c, task_cfg, steps, init).policy;
}

void save_meta_state(const MetaState& st, std::ostream& os) {
    os << "merpo-meta-state 1\n";
    os << "iter " << st.iter << "\n";
    os << "alphas " << st.alpha_per_task.size() << "\n";
    for (std::size_t i = 0; i < st.alpha_per_task.size(); ++i)
        os << (i ? " " : "") << format_g17(st.alpha_per_task[i]);
    os << "\n";
    save_policy(st.pi_c, os);
    save_qtable(st.q_meta, os);
}

MetaState load_meta_state(std::istream& is) {
    std::string tok;
    auto expect = [&](const std::string& kw) {
        if (!(is >> tok) || tok != kw)
            throw std::runtime_error("meta-state file: expected '" + kw + "'");
    };
    expect("merpo-meta-state");
    expect("1");
    MetaState st;
    expect("iter");
    if (!(is >> st.iter))
        throw std::runtime_error("meta-state file: bad iter");
    expect("alphas");
    std::size_t n;
    if (!(is >> n))
        throw std::runtime_error("meta-state file: bad alpha count");
    st.alpha_per_task.resize(n);
    for (double& a : st.alpha_per_task)
        if (!(is >> a))
            throw std::runtime_error("meta-state file: bad alpha");
    st.pi_c = load_policy(is);
    st.q_meta = load_qtable(is);
    return st;
}

void save_meta_state(const MetaState& st, const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open for writing: " + path);
    save_meta_state(st, os);
}

MetaState load_meta_state(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open for reading: " + path);
    return load_meta_state(is);
}

} // namespace merpo
