#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "merpo/data.hpp"
#include "merpo/mdp.hpp"
#include "merpo/rng.hpp"

namespace merpo {

/// Per-task dynamics/reward model. Transition rows are the softmax of
/// trans_logits over next states; reward_est is a direct per-(s,a) estimate.
struct ModelParams {
    Table3 trans_logits; // (s, a, s')
    Table2 reward_est;   // (s, a)

    ModelParams() = default;
    ModelParams(std::size_t n_states, std::size_t n_actions)
        : trans_logits(n_states, n_actions, n_states), reward_est(n_states, n_actions) {}

    Table3 transition_probs() const;

    /// Materializes the learnt MDP. Rewards are clamped to [-r_max, r_max].
    TabularMdp to_mdp(double gamma, std::vector<double> init_dist,
                      double r_max = kDefaultRMax) const;
};

/// The meta-model shares the task-model parameterization.
using MetaModelParams = ModelParams;

/// Mean negative log-likelihood of next states plus mean squared reward
/// error over the dataset.
double nll(const ModelParams& model, const OfflineDataset& data);

/// Full-batch gradient of nll(model, data) + eta * ||model - anchor||^2,
/// written into grad (same shapes as model).
void model_objective_gradient(const ModelParams& model, const OfflineDataset& data,
                              const MetaModelParams& anchor, double eta, ModelParams& grad);

/// Value of the proximal objective itself (for finite-difference checks).
double model_objective(const ModelParams& model, const OfflineDataset& data,
                       const MetaModelParams& anchor, double eta);

/// `steps` full-batch gradient-descent steps on the proximal objective from
/// `init`. Throws std::runtime_error on a non-finite gradient.
ModelParams fit_task_model(const OfflineDataset& data, const MetaModelParams& init, double eta,
                           int steps, double lr);

/// Proximal meta-model training: adapt each task from the current
/// meta-model, then move the meta-model toward the task average. Tasks are
/// reduced in index order.
MetaModelParams train_meta_model(std::span<const OfflineDataset> datasets, double eta,
                                 int inner_steps, double inner_lr, double outer_lr,
                                 int outer_iters);

struct EnsembleConfig {
    int members = 3;
    int select = 2;
    double validation_fraction = 0.1;
    double init_jitter = 0.05;
    double eta = 1.0;
    int steps = 25;
    double lr = 0.0; // 0 -> use kDefaultModelLr
    std::uint64_t seed = 0;
};

constexpr double kDefaultModelLr = 0.5;

/// Independently trained models with held-out selection; `selected` is
/// ordered by validation NLL ascending.
struct ModelEnsemble {
    std::vector<ModelParams> members;
    std::vector<std::size_t> selected;
    std::vector<double> validation_nll; // per member

    const ModelParams& best() const { return members.at(selected.at(0)); }
    /// Uniform draw among the selected members (model rollout protocol).
    const ModelParams& sample(Rng& rng) const {
        return members[selected[rng.next_index(selected.size())]];
    }
};

ModelEnsemble fit_ensemble(const OfflineDataset& data, const MetaModelParams& init,
                           const EnsembleConfig& cfg);

void save_model(const ModelParams& m, std::ostream& os);
void save_model(const ModelParams& m, const std::string& path);
ModelParams load_model(std::istream& is);
ModelParams load_model(const std::string& path);

} // namespace merpo
