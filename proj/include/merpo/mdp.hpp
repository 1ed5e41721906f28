#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "merpo/tensor.hpp"

namespace merpo {

constexpr double kDefaultRMax = 1.0;

/// Ground-truth tabular MDP: transition tensor T(s,a,s'), reward table
/// r(s,a) bounded by r_max, initial state distribution and discount.
struct TabularMdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    Table3 transition; // (s, a, s'), each row a distribution
    Table2 reward;     // (s, a)
    std::vector<double> init_dist;
    double gamma = 0.99;

    /// Throws std::invalid_argument if any structural invariant is broken:
    /// rows must sum to 1 within 1e-10 and be non-negative, init_dist must
    /// be a distribution, rewards bounded by r_max.
    void validate(double r_max = kDefaultRMax) const;
};

/// Per-state action distribution stored as logits. Probabilities are the
/// row softmax, so every action keeps strictly positive mass and KL terms
/// stay finite.
struct StochasticPolicy {
    Table2 logits; // (s, a)
    Table2 probs;  // derived, rows sum to 1

    StochasticPolicy() = default;
    explicit StochasticPolicy(Table2 logits_);

    static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions);
    /// Builds from a probability table; entries are floored at `floor` and
    /// rows renormalized before taking logs.
    static StochasticPolicy from_probs(const Table2& probs, double floor = 1e-12);

    std::size_t n_states() const { return logits.rows; }
    std::size_t n_actions() const { return logits.cols; }
};

/// Row softmax of a logits table.
Table2 softmax_rows(const Table2& logits);

/// State-action value estimates.
struct QTable {
    Table2 values; // (s, a)

    QTable() = default;
    QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
        : values(n_states, n_actions, fill) {}
};

/// Discounted marginal state-action distribution.
struct MarginalDist {
    Table2 dist; // (s, a), sums to 1

    MarginalDist() = default;
    MarginalDist(std::size_t n_states, std::size_t n_actions) : dist(n_states, n_actions) {}

    /// State marginal, summed over actions.
    std::vector<double> state_marginal() const;
};

/// Fixed point of the Bellman evaluation operator for `policy`, iterated to
/// max-norm residual < tol. Throws std::runtime_error if the residual does
/// not drop below tol within max_iters sweeps.
QTable exact_q(const TabularMdp& mdp, const StochasticPolicy& policy, double tol = 1e-10,
               std::size_t max_iters = 100000);

/// Optimal Q via value iteration, same convergence contract as exact_q.
QTable value_iteration(const TabularMdp& mdp, double tol = 1e-10, std::size_t max_iters = 100000);

/// Expected discounted return J(M, pi) = E_{mu0}[V(s0)].
double expected_return(const TabularMdp& mdp, const StochasticPolicy& policy, double tol = 1e-10);

/// Same return computed from a precomputed Q table (no extra solve).
double expected_return_from_q(const TabularMdp& mdp, const StochasticPolicy& policy,
                              const QTable& q);

/// Discounted marginal d(s,a) solving d = (1-gamma) mu0 pi + gamma d T^pi.
/// Solved directly; falls back to power iteration when the solve is
/// degenerate. `init_override` replaces mu0 when given (used for marginals
/// rooted at a dataset's state distribution).
MarginalDist discounted_marginal(const TabularMdp& mdp, const StochasticPolicy& policy,
                                 const std::vector<double>* init_override = nullptr);

/// Convex combination of two MDPs: f*m1 + (1-f)*m2 on both dynamics and
/// rewards. Shapes and gamma must match; f in [0, 1].
TabularMdp f_interpolant(const TabularMdp& m1, const TabularMdp& m2, double f);

/// max_s (1/2) sum_a |p1(a|s) - p2(a|s)|, in [0, 1].
double max_tv_distance(const StochasticPolicy& p1, const StochasticPolicy& p2);

/// State-weighted KL divergence sum_s w(s) KL(p1(.|s) || p2(.|s)) where
/// w is the state marginal of `weights`.
double kl_divergence(const StochasticPolicy& p1, const StochasticPolicy& p2,
                     const MarginalDist& weights);

/// Chi-square style divergence sum_a p1 (p1/p2 - 1) at state s.
double d_cql(const StochasticPolicy& p1, const StochasticPolicy& p2, std::size_t s);

} // namespace merpo
