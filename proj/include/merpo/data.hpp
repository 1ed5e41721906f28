#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "merpo/mdp.hpp"

namespace merpo {

enum class FamilyKind { gridworld_wind, point_grid_goal, reward_flip };

FamilyKind family_from_string(const std::string& s);
std::string to_string(FamilyKind k);

/// A distribution over tasks sharing state and action spaces. Tasks within
/// a family differ by a sampled perturbation: a per-task wind for
/// gridworld_wind, a goal location for point_grid_goal, a reward sign for
/// reward_flip.
struct TaskFamily {
    FamilyKind kind = FamilyKind::gridworld_wind;
    std::size_t base_size = 4; // grid dimension (or corridor length for reward_flip)
    double perturb_lo = -0.15;
    double perturb_hi = 0.15;
    std::uint64_t seed = 0;
    double gamma = 0.99;
};

std::vector<TabularMdp> sample_tasks(const TaskFamily& family, std::size_t n);

enum class Quality { random, medium, expert };

Quality quality_from_string(const std::string& s);
std::string to_string(Quality q);

/// Behavior policy of controllable quality: expert = softmax of the optimal
/// Q at `temperature`, medium = expert mixed 50/50 with uniform, random =
/// uniform. Temperature is floored at 1e-3.
StochasticPolicy make_behavior_policy(const TabularMdp& mdp, Quality quality, double temperature);

/// Offline dataset of independent transition tuples plus exact sufficient
/// statistics (visit counts and reward sums).
struct OfflineDataset {
    struct Tuple {
        std::uint32_t s = 0, a = 0;
        double r = 0.0;
        std::uint32_t next = 0;
    };

    std::string task_id;
    std::size_t n_states = 0, n_actions = 0;
    Quality quality = Quality::medium;
    std::uint64_t seed = 0;

    std::vector<Tuple> transitions;
    ITable2 count_sa;    // |D(s,a)|
    ITable3 count_sas;   // |D(s,a,s')|
    Table2 reward_sum_sa;

    std::size_t size() const { return transitions.size(); }

    /// Empirical marginal d(s,a) = count/N (zero on unvisited pairs).
    MarginalDist marginal() const;

    /// Empirical state marginal (counts over s, normalized).
    std::vector<double> state_marginal() const;

    /// Dataset-empirical conditional pi_beta_hat(a|s). Unsupported states
    /// fall back to uniform; supported rows are floored at 1e-6 and
    /// renormalized so the result has full support.
    StochasticPolicy empirical_behavior() const;

    /// Recomputes count/sum tables from the tuple list (test oracle).
    void rebuild_counts();
};

/// Draws n i.i.d. tuples from the discounted marginal of `beta`:
/// (s,a) ~ d^beta, s' ~ T(.|s,a), r = r(s,a).
OfflineDataset collect_dataset(const TabularMdp& mdp, const StochasticPolicy& beta,
                               std::size_t n_transitions, std::uint64_t seed);

/// Empirical MDP induced by a dataset. Visited pairs carry the exact
/// empirical frequencies; unvisited pairs get a uniform transition row,
/// zero reward, and an effective count floor of 0.5 for downstream
/// 1/sqrt(|D|) terms. init_dist is the dataset state marginal.
struct EmpiricalMdp {
    TabularMdp mdp;
    std::vector<std::uint8_t> support; // (s*A + a) -> visited flag
    Table2 effective_count;            // floored at 0.5 on unvisited pairs
    MarginalDist data_marginal;        // d(s,a) = count/N

    bool supported(std::size_t s, std::size_t a) const { return support[s * mdp.n_actions + a] != 0; }
};

EmpiricalMdp induce_empirical(const OfflineDataset& data, double gamma);

void save_dataset(const OfflineDataset& data, std::ostream& os);
void save_dataset(const OfflineDataset& data, const std::string& path);
OfflineDataset load_dataset(std::istream& is);
OfflineDataset load_dataset(const std::string& path);

} // namespace merpo
