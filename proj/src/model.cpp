#include "merpo/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "merpo/rng.hpp"
#include "merpo/serialize.hpp"

namespace merpo {

namespace {

/// log-normalizers of each (s,a) logits row.
Table2 row_log_norms(const Table3& logits) {
    Table2 out(logits.d0, logits.d1);
    for (std::size_t s = 0; s < logits.d0; ++s)
        for (std::size_t a = 0; a < logits.d1; ++a) {
            const double* z = logits.row(s, a);
            double m = z[0];
            for (std::size_t k = 1; k < logits.d2; ++k)
                m = std::max(m, z[k]);
            double acc = 0.0;
            for (std::size_t k = 0; k < logits.d2; ++k)
                acc += std::exp(z[k] - m);
            out(s, a) = m + std::log(acc);
        }
    return out;
}

} // namespace

Table3 ModelParams::transition_probs() const {
    Table3 probs(trans_logits.d0, trans_logits.d1, trans_logits.d2);
    Table2 norms = row_log_norms(trans_logits);
    for (std::size_t s = 0; s < probs.d0; ++s)
        for (std::size_t a = 0; a < probs.d1; ++a)
            for (std::size_t k = 0; k < probs.d2; ++k)
                probs(s, a, k) = std::exp(trans_logits(s, a, k) - norms(s, a));
    return probs;
}

TabularMdp ModelParams::to_mdp(double gamma, std::vector<double> init_dist, double r_max) const {
    TabularMdp mdp;
    mdp.n_states = trans_logits.d0;
    mdp.n_actions = trans_logits.d1;
    mdp.gamma = gamma;
    mdp.transition = transition_probs();
    mdp.reward = reward_est;
    for (double& r : mdp.reward.v)
        r = std::clamp(r, -r_max, r_max);
    mdp.init_dist = std::move(init_dist);
    return mdp;
}

double nll(const ModelParams& model, const OfflineDataset& data) {
    if (data.size() == 0)
        throw std::invalid_argument("nll: dataset is empty");
    Table2 norms = row_log_norms(model.trans_logits);
    double acc = 0.0;
    for (const auto& t : data.transitions) {
        double log_p = model.trans_logits(t.s, t.a, t.next) - norms(t.s, t.a);
        double r_err = model.reward_est(t.s, t.a) - t.r;
        acc += -log_p + r_err * r_err;
    }
    return acc / double(data.size());
}

double model_objective(const ModelParams& model, const OfflineDataset& data,
                       const MetaModelParams& anchor, double eta) {
    double obj = nll(model, data);
    if (eta != 0.0) {
        double prox = 0.0;
        for (std::size_t i = 0; i < model.trans_logits.size(); ++i) {
            double d = model.trans_logits.v[i] - anchor.trans_logits.v[i];
            prox += d * d;
        }
        for (std::size_t i = 0; i < model.reward_est.size(); ++i) {
            double d = model.reward_est.v[i] - anchor.reward_est.v[i];
            prox += d * d;
        }
        obj += eta * prox;
    }
    return obj;
}

void model_objective_gradient(const ModelParams& model, const OfflineDataset& data,
                              const MetaModelParams& anchor, double eta, ModelParams& grad) {
    const std::size_t S = data.n_states, A = data.n_actions;
    const double n = double(data.size());
    if (grad.trans_logits.size() != model.trans_logits.size())
        grad = ModelParams(S, A);

    Table3 probs = model.transition_probs();
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            double c = double(data.count_sa(s, a));
            for (std::size_t k = 0; k < S; ++k)
                grad.trans_logits(s, a, k) =
                    (c * probs(s, a, k) - double(data.count_sas(s, a, k))) / n +
                    2.0 * eta * (model.trans_logits(s, a, k) - anchor.trans_logits(s, a, k));
            grad.reward_est(s, a) =
                2.0 * (c * model.reward_est(s, a) - data.reward_sum_sa(s, a)) / n +
                2.0 * eta * (model.reward_est(s, a) - anchor.reward_est(s, a));
        }
}

ModelParams fit_task_model(const OfflineDataset& data, const MetaModelParams& init, double eta,
                           int steps, double lr) {
    if (lr <= 0.0)
        throw std::invalid_argument("fit_task_model: lr must be positive");
    ModelParams theta = init;
    ModelParams grad(data.n_states, data.n_actions);
    for (int step = 0; step < steps; ++step) {
        model_objective_gradient(theta, data, init, eta, grad);
        for (double g : grad.trans_logits.v)
            if (!std::isfinite(g))
                throw std::runtime_error("fit_task_model: non-finite gradient at step " +
                                         std::to_string(step) + " (lr too large?)");
        for (std::size_t i = 0; i < theta.trans_logits.size(); ++i)
            theta.trans_logits.v[i] -= lr * grad.trans_logits.v[i];
        for (std::size_t i = 0; i < theta.reward_est.size(); ++i)
            theta.reward_est.v[i] -= lr * grad.reward_est.v[i];
    }
    return theta;
}

MetaModelParams train_meta_model(std::span<const OfflineDataset> datasets, double eta,
                                 int inner_steps, double inner_lr, double outer_lr,
                                 int outer_iters) {
    if (datasets.empty())
        throw std::invalid_argument("train_meta_model: need at least one dataset");
    MetaModelParams phi(datasets[0].n_states, datasets[0].n_actions);
    ModelParams mean(datasets[0].n_states, datasets[0].n_actions);
    for (int k = 0; k < outer_iters; ++k) {
        std::fill(mean.trans_logits.v.begin(), mean.trans_logits.v.end(), 0.0);
        std::fill(mean.reward_est.v.begin(), mean.reward_est.v.end(), 0.0);
        for (const OfflineDataset& d : datasets) {
            ModelParams theta = fit_task_model(d, phi, eta, inner_steps, inner_lr);
            for (std::size_t i = 0; i < mean.trans_logits.size(); ++i)
                mean.trans_logits.v[i] += theta.trans_logits.v[i];
            for (std::size_t i = 0; i < mean.reward_est.size(); ++i)
                mean.reward_est.v[i] += theta.reward_est.v[i];
        }
        double inv = 1.0 / double(datasets.size());
        for (std::size_t i = 0; i < phi.trans_logits.size(); ++i)
            phi.trans_logits.v[i] -= outer_lr * (phi.trans_logits.v[i] - inv * mean.trans_logits.v[i]);
        for (std::size_t i = 0; i < phi.reward_est.size(); ++i)
            phi.reward_est.v[i] -= outer_lr * (phi.reward_est.v[i] - inv * mean.reward_est.v[i]);
    }
    return phi;
}

ModelEnsemble fit_ensemble(const OfflineDataset& data, const MetaModelParams& init,
                           const EnsembleConfig& cfg) {
    if (cfg.members < 1 || cfg.select < 1 || cfg.select > cfg.members)
        throw std::invalid_argument("fit_ensemble: bad members/select");
    Rng rng = Rng(cfg.seed).derive("ensemble");

    // Seeded train/validation split of the tuple list.
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.derive("split").shuffle(idx);
    std::size_t n_val = std::size_t(double(data.size()) * cfg.validation_fraction);
    if (n_val == 0 || n_val == data.size()) {
        // Too small to split; validate on the training data.
        n_val = 0;
    }
    auto subset = [&](std::size_t lo, std::size_t hi) {
        OfflineDataset sub = data;
        sub.transitions.clear();
        for (std::size_t i = lo; i < hi; ++i)
            sub.transitions.push_back(data.transitions[idx[i]]);
        sub.rebuild_counts();
        return sub;
    };
    OfflineDataset train = n_val > 0 ? subset(n_val, data.size()) : data;
    OfflineDataset val = n_val > 0 ? subset(0, n_val) : data;

    double lr = cfg.lr > 0.0 ? cfg.lr : kDefaultModelLr;
    ModelEnsemble ens;
    for (int m = 0; m < cfg.members; ++m) {
        MetaModelParams start = init;
        Rng member_rng = rng.derive(std::uint64_t(m));
        for (double& z : start.trans_logits.v)
            z += cfg.init_jitter * member_rng.next_gaussian();
        for (double& r : start.reward_est.v)
            r += cfg.init_jitter * member_rng.next_gaussian();
        ens.members.push_back(fit_task_model(train, start, cfg.eta, cfg.steps, lr));
        ens.validation_nll.push_back(nll(ens.members.back(), val));
    }

    std::vector<std::size_t> order(ens.members.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ens.validation_nll[a] < ens.validation_nll[b];
    });
    ens.selected.assign(order.begin(), order.begin() + cfg.select);
    return ens;
}

void save_model(const ModelParams& m, std::ostream& os) {
    os << "merpo-model 1\n" << m.trans_logits.d0 << " " << m.trans_logits.d1 << "\n";
    os << "logits 1\n";
    os << "trans_logits\n";
    for (std::size_t s = 0; s < m.trans_logits.d0; ++s)
        for (std::size_t a = 0; a < m.trans_logits.d1; ++a) {
            for (std::size_t k = 0; k < m.trans_logits.d2; ++k)
                os << (k ? " " : "") << format_g17(m.trans_logits(s, a, k));
            os << "\n";
        }
    os << "reward_est\n";
    for (std::size_t s = 0; s < m.reward_est.rows; ++s) {
        for (std::size_t a = 0; a < m.reward_est.cols; ++a)
            os << (a ? " " : "") << format_g17(m.reward_est(s, a));
        os << "\n";
    }
}

ModelParams load_model(std::istream& is) {
    std::string tok;
    auto expect = [&](const std::string& kw) {
        if (!(is >> tok) || tok != kw)
            throw std::runtime_error("model file: expected '" + kw + "'");
    };
    expect("merpo-model");
    expect("1");
    std::size_t s, a;
    if (!(is >> s >> a))
        throw std::runtime_error("model file: bad shape");
    expect("logits");
    expect("1");
    expect("trans_logits");
    ModelParams m(s, a);
    for (double& x : m.trans_logits.v)
        if (!(is >> x))
            throw std::runtime_error("model file: bad trans_logits");
    expect("reward_est");
    for (double& x : m.reward_est.v)
        if (!(is >> x))
            throw std::runtime_error("model file: bad reward_est");
    return m;
}

void save_model(const ModelParams& m, const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open for writing: " + path);
    save_model(m, os);
}

ModelParams load_model(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open for reading: " + path);
    return load_model(is);
}

} // namespace merpo
