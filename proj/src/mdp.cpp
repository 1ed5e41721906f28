#include "merpo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "merpo/rng.hpp"

namespace merpo {

namespace {

void check_distribution(const double* p, std::size_t n, double tol, const std::string& what) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (p[i] < 0.0)
            throw std::invalid_argument(what + ": negative entry");
        sum += p[i];
    }
    if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument(what + ": sums to " + std::to_string(sum));
}

} // namespace

void TabularMdp::validate(double r_max) const {
    if (n_states == 0 || n_actions == 0)
        throw std::invalid_argument("TabularMdp: empty state or action space");
    if (gamma <= 0.0 || gamma >= 1.0)
        throw std::invalid_argument("TabularMdp: gamma must lie in (0, 1)");
    if (transition.d0 != n_states || transition.d1 != n_actions || transition.d2 != n_states ||
        reward.rows != n_states || reward.cols != n_actions || init_dist.size() != n_states)
        throw std::invalid_argument("TabularMdp: shape mismatch");
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a) {
            check_distribution(transition.row(s, a), n_states, 1e-10, "transition row");
            if (std::abs(reward(s, a)) > r_max + 1e-12)
                throw std::invalid_argument("TabularMdp: |reward| exceeds r_max");
        }
    check_distribution(init_dist.data(), n_states, 1e-10, "init_dist");
}

Table2 softmax_rows(const Table2& logits) {
    Table2 out(logits.rows, logits.cols);
    for (std::size_t s = 0; s < logits.rows; ++s) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < logits.cols; ++a)
            m = std::max(m, logits(s, a));
        double z = 0.0;
        for (std::size_t a = 0; a < logits.cols; ++a) {
            out(s, a) = std::exp(logits(s, a) - m);
            z += out(s, a);
        }
        for (std::size_t a = 0; a < logits.cols; ++a)
            out(s, a) /= z;
    }
    return out;
}

StochasticPolicy::StochasticPolicy(Table2 logits_) : logits(std::move(logits_)) {
    probs = softmax_rows(logits);
}

StochasticPolicy StochasticPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
    return StochasticPolicy(Table2(n_states, n_actions, 0.0));
}

StochasticPolicy StochasticPolicy::from_probs(const Table2& probs, double floor) {
    Table2 logits(probs.rows, probs.cols);
    for (std::size_t s = 0; s < probs.rows; ++s) {
        double z = 0.0;
        for (std::size_t a = 0; a < probs.cols; ++a)
            z += std::max(probs(s, a), floor);
        for (std::size_t a = 0; a < probs.cols; ++a)
            logits(s, a) = std::log(std::max(probs(s, a), floor) / z);
    }
    return StochasticPolicy(std::move(logits));
}

std::vector<double> MarginalDist::state_marginal() const {
    std::vector<double> w(dist.rows, 0.0);
    for (std::size_t s = 0; s < dist.rows; ++s)
        for (std::size_t a = 0; a < dist.cols; ++a)
            w[s] += dist(s, a);
    return w;
}

namespace {

/// One evaluation sweep Q <- r + gamma T V with V(s) = sum_a pi(a|s) Q(s,a).
/// Returns the max-norm residual.
double bellman_sweep(const TabularMdp& mdp, const Table2& probs, Table2& q) {
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    std::vector<double> v(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        double acc = 0.0;
        for (std::size_t a = 0; a < A; ++a)
            acc += probs(s, a) * q(s, a);
        v[s] = acc;
    }
    double residual = 0.0;
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            const double* t = mdp.transition.row(s, a);
            double ev = 0.0;
            for (std::size_t s2 = 0; s2 < S; ++s2)
                ev += t[s2] * v[s2];
            double next = mdp.reward(s, a) + mdp.gamma * ev;
            residual = std::max(residual, std::abs(next - q(s, a)));
            q(s, a) = next;
        }
    return residual;
}

} // namespace

QTable exact_q(const TabularMdp& mdp, const StochasticPolicy& policy, double tol,
               std::size_t max_iters) {
    if (tol <= 0.0)
        throw std::invalid_argument("exact_q: tol must be positive");
    QTable q(mdp.n_states, mdp.n_actions);
    for (std::size_t it = 0; it < max_iters; ++it) {
        if (bellman_sweep(mdp, policy.probs, q.values) < tol)
            return q;
    }
    throw std::runtime_error("exact_q: no convergence within iteration cap (check gamma/tol)");
}

QTable value_iteration(const TabularMdp& mdp, double tol, std::size_t max_iters) {
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    QTable q(S, A);
    std::vector<double> v(S, 0.0);
    for (std::size_t it = 0; it < max_iters; ++it) {
        double residual = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) {
                const double* t = mdp.transition.row(s, a);
                double ev = 0.0;
                for (std::size_t s2 = 0; s2 < S; ++s2)
                    ev += t[s2] * v[s2];
                double next = mdp.reward(s, a) + mdp.gamma * ev;
                residual = std::max(residual, std::abs(next - q.values(s, a)));
                q.values(s, a) = next;
            }
        for (std::size_t s = 0; s < S; ++s) {
            double m = q.values(s, 0);
            for (std::size_t a = 1; a < A; ++a)
                m = std::max(m, q.values(s, a));
            v[s] = m;
        }
        if (residual < tol)
            return q;
    }
    throw std::runtime_error("value_iteration: no convergence within iteration cap");
}

double expected_return_from_q(const TabularMdp& mdp, const StochasticPolicy& policy,
                              const QTable& q) {
    double j = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        double v = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            v += policy.probs(s, a) * q.values(s, a);
        j += mdp.init_dist[s] * v;
    }
    return j;
}

double expected_return(const TabularMdp& mdp, const StochasticPolicy& policy, double tol) {
    return expected_return_from_q(mdp, policy, exact_q(mdp, policy, tol));
}

namespace {

MarginalDist marginal_power_iteration(const TabularMdp& mdp, const Table2& probs,
                                      const std::vector<double>& mu0) {
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    std::vector<double> base(S * A), d(S * A), next(S * A);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a)
            base[s * A + a] = (1.0 - mdp.gamma) * mu0[s] * probs(s, a);
    d = base;
    for (std::size_t it = 0; it < 200000; ++it) {
        // next = base + gamma * d T^pi
        std::vector<double> flow(S, 0.0);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t a = 0; a < A; ++a) {
                const double* t = mdp.transition.row(s, a);
                double mass = d[s * A + a];
                if (mass == 0.0)
                    continue;
                for (std::size_t s2 = 0; s2 < S; ++s2)
                    flow[s2] += mass * t[s2];
            }
        double delta = 0.0;
        for (std::size_t s2 = 0; s2 < S; ++s2)
            for (std::size_t a2 = 0; a2 < A; ++a2) {
                double val = base[s2 * A + a2] + mdp.gamma * flow[s2] * probs(s2, a2);
                delta += std::abs(val - d[s2 * A + a2]);
                next[s2 * A + a2] = val;
            }
        d.swap(next);
        if (delta < 1e-14)
            break;
    }
    MarginalDist out(S, A);
    double total = std::accumulate(d.begin(), d.end(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
        out.dist.v[i] = d[i] / total;
    return out;
}

} // namespace

MarginalDist discounted_marginal(const TabularMdp& mdp, const StochasticPolicy& policy,
                                 const std::vector<double>* init_override) {
    const std::size_t S = mdp.n_states, A = mdp.n_actions, n = S * A;
    const std::vector<double>& mu0 = init_override ? *init_override : mdp.init_dist;

    // (I - gamma (T^pi)^T) d = (1-gamma) * mu0 pi, with
    // T^pi[(s,a),(s',a')] = T(s'|s,a) pi(a'|s').
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            const double* t = mdp.transition.row(s, a);
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                if (t[s2] == 0.0)
                    continue;
                for (std::size_t a2 = 0; a2 < A; ++a2)
                    m(Eigen::Index(s2 * A + a2), Eigen::Index(s * A + a)) -=
                        mdp.gamma * t[s2] * policy.probs(s2, a2);
            }
        }
    Eigen::VectorXd b(n);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a)
            b(Eigen::Index(s * A + a)) = (1.0 - mdp.gamma) * mu0[s] * policy.probs(s, a);

    Eigen::VectorXd d = m.partialPivLu().solve(b);

    bool ok = true;
    double total = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d(i)) || d(i) < -1e-9) {
            ok = false;
            break;
        }
        total += std::max(d(i), 0.0);
    }
    if (!ok || std::abs(total - 1.0) > 1e-6)
        return marginal_power_iteration(mdp, policy.probs, mu0);

    MarginalDist out(S, A);
    for (std::size_t i = 0; i < n; ++i)
        out.dist.v[i] = std::max(d(Eigen::Index(i)), 0.0) / total;
    return out;
}

TabularMdp f_interpolant(const TabularMdp& m1, const TabularMdp& m2, double f) {
    if (m1.n_states != m2.n_states || m1.n_actions != m2.n_actions)
        throw std::invalid_argument("f_interpolant: shape mismatch");
    if (m1.gamma != m2.gamma)
        throw std::invalid_argument("f_interpolant: gamma mismatch");
    if (f < 0.0 || f > 1.0)
        throw std::invalid_argument("f_interpolant: f must lie in [0, 1]");
    if (f == 1.0)
        return m1;
    if (f == 0.0)
        return m2;
    // The x2 + f*(x1 - x2) form keeps f_interpolant(m, m, f) == m exactly.
    TabularMdp out = m1;
    for (std::size_t i = 0; i < out.transition.size(); ++i)
        out.transition.v[i] =
            m2.transition.v[i] + f * (m1.transition.v[i] - m2.transition.v[i]);
    for (std::size_t i = 0; i < out.reward.size(); ++i)
        out.reward.v[i] = m2.reward.v[i] + f * (m1.reward.v[i] - m2.reward.v[i]);
    for (std::size_t s = 0; s < out.n_states; ++s)
        out.init_dist[s] = m2.init_dist[s] + f * (m1.init_dist[s] - m2.init_dist[s]);
    return out;
}

double max_tv_distance(const StochasticPolicy& p1, const StochasticPolicy& p2) {
    if (p1.n_states() != p2.n_states() || p1.n_actions() != p2.n_actions())
        throw std::invalid_argument("max_tv_distance: shape mismatch");
    double worst = 0.0;
    for (std::size_t s = 0; s < p1.n_states(); ++s) {
        double tv = 0.0;
        for (std::size_t a = 0; a < p1.n_actions(); ++a)
            tv += std::abs(p1.probs(s, a) - p2.probs(s, a));
        worst = std::max(worst, 0.5 * tv);
    }
    return worst;
}

double kl_divergence(const StochasticPolicy& p1, const StochasticPolicy& p2,
                     const MarginalDist& weights) {
    if (p1.n_states() != p2.n_states() || p1.n_actions() != p2.n_actions())
        throw std::invalid_argument("kl_divergence: shape mismatch");
    std::vector<double> w = weights.state_marginal();
    double total = 0.0;
    for (std::size_t s = 0; s < p1.n_states(); ++s) {
        if (w[s] == 0.0)
            continue;
        double kl = 0.0;
        for (std::size_t a = 0; a < p1.n_actions(); ++a) {
            double p = p1.probs(s, a);
            if (p > 0.0)
                kl += p * std::log(p / p2.probs(s, a));
        }
        total += w[s] * kl;
    }
    return std::max(total, 0.0);
}

double d_cql(const StochasticPolicy& p1, const StochasticPolicy& p2, std::size_t s) {
    double acc = 0.0;
    for (std::size_t a = 0; a < p1.n_actions(); ++a) {
        double p = p1.probs(s, a);
        acc += p * (p / p2.probs(s, a) - 1.0);
    }
    return std::max(acc, 0.0);
}

} // namespace merpo
