#pragma once

#include <cmath>

#include "merpo/mdp.hpp"
#include "merpo/rng.hpp"

namespace merpo::testutil {

/// Random dense MDP: Dirichlet-like transition rows, rewards in [-1, 1],
/// uniform start distribution.
inline TabularMdp random_mdp(Rng& rng, std::size_t n_states, std::size_t n_actions,
                             double gamma) {
    TabularMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.transition = Table3(n_states, n_actions, n_states);
    mdp.reward = Table2(n_states, n_actions);
    mdp.init_dist.assign(n_states, 1.0 / double(n_states));
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a) {
            double total = 0.0;
            for (std::size_t s2 = 0; s2 < n_states; ++s2) {
                double e = -std::log(1.0 - rng.next_double());
                mdp.transition(s, a, s2) = e;
                total += e;
            }
            for (std::size_t s2 = 0; s2 < n_states; ++s2)
                mdp.transition(s, a, s2) /= total;
            mdp.reward(s, a) = rng.uniform(-1.0, 1.0);
        }
    return mdp;
}

inline StochasticPolicy random_policy(Rng& rng, std::size_t n_states, std::size_t n_actions,
                                      double scale = 1.0) {
    Table2 logits(n_states, n_actions);
    for (double& z : logits.v)
        z = scale * rng.next_gaussian();
    return StochasticPolicy(std::move(logits));
}

} // namespace merpo::testutil
