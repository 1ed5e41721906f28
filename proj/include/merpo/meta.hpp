#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "merpo/rac.hpp"

namespace merpo {

struct MerpoConfig {
    std::size_t task_batch_size = 8;
    int inner_steps = 10;
    int outer_iters = 60;
    double outer_lr = 2.0;   // meta-policy step size (backtracked)
    double meta_q_lr = 0.5;  // xi_q

    bool adaptive_alpha = false;
    double alpha_init = 0.4;
    double alpha_lr = 1e-4;
    double alpha_lo = 0.1;
    double alpha_hi = 0.5;

    // Task-model adaptation from the meta-model.
    double model_eta = 1.0;
    int model_adapt_steps = 25;
    double model_lr = 0.5;

    bool init_task_q_from_meta = true;
    bool persist_duals = true; // carry per-task beta/lambda across outer iterations

    RacConfig rac;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Shared state carried across meta-iterations.
struct MetaState {
    StochasticPolicy pi_c;
    QTable q_meta;
    std::vector<double> alpha_per_task;
    long iter = 0;
};

/// Inner-loop product for one task in the current batch.
struct TaskResult {
    std::size_t task_index = 0;
    StochasticPolicy policy;
    QTable q;
    MarginalDist rho;
    const OfflineDataset* data = nullptr;
    double alpha = 0.4;
    double lambda = 0.0;
    double beta = 0.0;
    double div_beta = 0.0;
    double div_c = 0.0;
};

/// One meta-policy update: a backtracked gradient step on the batch mean of
/// lambda_n (1 - alpha_n) KL(pi_n || pi_c), each KL state-weighted by the
/// task's rho.
StochasticPolicy meta_policy_step(const MetaState& state,
                                  const std::vector<TaskResult>& task_results,
                                  const MerpoConfig& cfg);

/// Q_meta <- Q_meta - xi_q (Q_meta - mean_n Q_n), elementwise.
QTable meta_q_step(const QTable& q_meta, const std::vector<QTable>& task_qs, double xi_q);

/// One clipped step of the per-task alpha rule: alpha moves up when the
/// task policy sits closer to the meta-policy than to the behavior policy.
double adapt_alpha(double alpha, double div_beta, double div_c, double lr, double lo, double hi);

/// Per-iteration observer; receives the updated state and the batch results.
using MetaCallback = std::function<void(const MetaState&, const std::vector<TaskResult>&)>;

/// Full meta-training loop over offline datasets. Training never sees the
/// underlying task MDPs; any return evaluation happens in the caller's
/// callback against MDPs it holds privately.
MetaState train_merpo(const std::vector<OfflineDataset>& datasets,
                      const MetaModelParams& meta_model, const MerpoConfig& cfg,
                      const MetaCallback& callback = nullptr);

/// New-task adaptation: adapt the model from the meta-model, then run the
/// within-task loop from the meta-policy / meta-Q initialization.
StochasticPolicy adapt_new_task(const MetaState& state, const MetaModelParams& meta_model,
                                const OfflineDataset& data, const MerpoConfig& cfg, int steps);

void save_meta_state(const MetaState& st, std::ostream& os);
void save_meta_state(const MetaState& st, const std::string& path);
MetaState load_meta_state(std::istream& is);
MetaState load_meta_state(const std::string& path);

} // namespace merpo
