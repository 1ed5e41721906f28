#include "merpo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "merpo/rng.hpp"
#include "merpo/serialize.hpp"

namespace merpo {

FamilyKind family_from_string(const std::string& s) {
    if (s == "gridworld_wind")
        return FamilyKind::gridworld_wind;
    if (s == "point_grid_goal")
        return FamilyKind::point_grid_goal;
    if (s == "reward_flip")
        return FamilyKind::reward_flip;
    throw std::invalid_argument("unknown task family: " + s);
}

std::string to_string(FamilyKind k) {
    switch (k) {
    case FamilyKind::gridworld_wind: return "gridworld_wind";
    case FamilyKind::point_grid_goal: return "point_grid_goal";
    case FamilyKind::reward_flip: return "reward_flip";
    }
    return "?";
}

Quality quality_from_string(const std::string& s) {
    if (s == "random")
        return Quality::random;
    if (s == "medium")
        return Quality::medium;
    if (s == "expert")
        return Quality::expert;
    throw std::invalid_argument("unknown quality: " + s);
}

std::string to_string(Quality q) {
    switch (q) {
    case Quality::random: return "random";
    case Quality::medium: return "medium";
    case Quality::expert: return "expert";
    }
    return "?";
}

namespace {

constexpr double kMoveProb = 0.9; // grid actions succeed with this probability, else stay

struct Grid {
    std::size_t n;
    std::size_t state(std::size_t x, std::size_t y) const { return y * n + x; }

    std::size_t step(std::size_t s, int dx, int dy) const {
        std::size_t x = s % n, y = s / n;
        long nx = long(x) + dx, ny = long(y) + dy;
        if (nx < 0 || nx >= long(n) || ny < 0 || ny >= long(n))
            return s; // walls
        return state(std::size_t(nx), std::size_t(ny));
    }
};

// Actions on grids: 0=up, 1=down, 2=left, 3=right.
constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

/// Pushes probability mass one cell along an axis with probability p
/// (sign of p gives the direction); walls absorb the drift.
void apply_drift(const Grid& g, std::vector<double>& dist, double p, bool x_axis) {
    if (p == 0.0)
        return;
    int d = p > 0.0 ? 1 : -1;
    double mag = std::abs(p);
    std::vector<double> out(dist.size(), 0.0);
    for (std::size_t s = 0; s < dist.size(); ++s) {
        if (dist[s] == 0.0)
            continue;
        std::size_t shifted = x_axis ? g.step(s, d, 0) : g.step(s, 0, d);
        out[s] += dist[s] * (1.0 - mag);
        out[shifted] += dist[s] * mag;
    }
    dist.swap(out);
}

TabularMdp make_grid_task(const TaskFamily& family, double wind_x, double wind_y,
                          std::size_t goal, bool sparse_reward) {
    Grid g{family.base_size};
    const std::size_t S = g.n * g.n, A = 4;
    TabularMdp mdp;
    mdp.n_states = S;
    mdp.n_actions = A;
    mdp.gamma = family.gamma;
    mdp.transition = Table3(S, A, S);
    mdp.reward = Table2(S, A);
    mdp.init_dist.assign(S, 1.0 / double(S));

    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            std::vector<double> dist(S, 0.0);
            dist[g.step(s, kDx[a], kDy[a])] += kMoveProb;
            dist[s] += 1.0 - kMoveProb;
            apply_drift(g, dist, wind_x, true);
            apply_drift(g, dist, wind_y, false);
            for (std::size_t s2 = 0; s2 < S; ++s2)
                mdp.transition(s, a, s2) = dist[s2];
            if (sparse_reward)
                mdp.reward(s, a) = (s == goal) ? 1.0 : 0.0;
            else
                mdp.reward(s, a) = (s == goal) ? 1.0 : -0.05;
        }
    return mdp;
}

TabularMdp make_corridor_task(const TaskFamily& family, double direction_sign) {
    const std::size_t S = std::max<std::size_t>(family.base_size, 2), A = 2; // 0=left, 1=right
    TabularMdp mdp;
    mdp.n_states = S;
    mdp.n_actions = A;
    mdp.gamma = family.gamma;
    mdp.transition = Table3(S, A, S);
    mdp.reward = Table2(S, A);
    mdp.init_dist.assign(S, 1.0 / double(S));

    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            std::size_t target = s;
            if (a == 0 && s > 0)
                target = s - 1;
            if (a == 1 && s + 1 < S)
                target = s + 1;
            mdp.transition(s, a, target) += kMoveProb;
            mdp.transition(s, a, s) += 1.0 - kMoveProb;
            // Reward follows the movement direction; the task sign flips it.
            mdp.reward(s, a) = direction_sign * (a == 1 ? 0.5 : -0.5);
        }
    return mdp;
}

} // namespace

std::vector<TabularMdp> sample_tasks(const TaskFamily& family, std::size_t n) {
    if (n == 0)
        throw std::invalid_argument("sample_tasks: n must be >= 1");
    if (family.perturb_lo > family.perturb_hi)
        throw std::invalid_argument("sample_tasks: empty perturbation range");
    Rng rng = Rng(family.seed).derive("tasks");
    std::vector<TabularMdp> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng task_rng = rng.derive(i);
        switch (family.kind) {
        case FamilyKind::gridworld_wind: {
            double wx = task_rng.uniform(family.perturb_lo, family.perturb_hi);
            double wy = task_rng.uniform(family.perturb_lo, family.perturb_hi);
            std::size_t goal = family.base_size * family.base_size - 1;
            out.push_back(make_grid_task(family, wx, wy, goal, /*sparse_reward=*/false));
            break;
        }
        case FamilyKind::point_grid_goal: {
            // Goals sit on the far edge of the grid, one per task.
            std::size_t nb = family.base_size;
            std::size_t gx = task_rng.next_index(nb);
            std::size_t goal = (nb - 1) * nb + gx;
            out.push_back(make_grid_task(family, 0.0, 0.0, goal, /*sparse_reward=*/true));
            break;
        }
        case FamilyKind::reward_flip:
            out.push_back(make_corridor_task(family, i % 2 == 0 ? 1.0 : -1.0));
            break;
        }
        out.back().validate();
    }
    return out;
}

StochasticPolicy make_behavior_policy(const TabularMdp& mdp, Quality quality, double temperature) {
    if (temperature <= 0.0)
        throw std::invalid_argument("make_behavior_policy: temperature must be positive");
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    if (quality == Quality::random)
        return StochasticPolicy::uniform(S, A);

    QTable qstar = value_iteration(mdp);
    double temp = std::max(temperature, 1e-3);
    Table2 logits(S, A);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a)
            logits(s, a) = qstar.values(s, a) / temp;
    StochasticPolicy expert(std::move(logits));
    if (quality == Quality::expert)
        return expert;

    Table2 mixed(S, A);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a)
            mixed(s, a) = 0.5 * expert.probs(s, a) + 0.5 / double(A);
    return StochasticPolicy::from_probs(mixed);
}

MarginalDist OfflineDataset::marginal() const {
    MarginalDist d(n_states, n_actions);
    double n = double(size());
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a)
            d.dist(s, a) = double(count_sa(s, a)) / n;
    return d;
}

std::vector<double> OfflineDataset::state_marginal() const {
    std::vector<double> w(n_states, 0.0);
    double n = double(size());
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a)
            w[s] += double(count_sa(s, a)) / n;
    return w;
}

StochasticPolicy OfflineDataset::empirical_behavior() const {
    Table2 probs(n_states, n_actions);
    for (std::size_t s = 0; s < n_states; ++s) {
        std::int64_t total = 0;
        for (std::size_t a = 0; a < n_actions; ++a)
            total += count_sa(s, a);
        for (std::size_t a = 0; a < n_actions; ++a)
            probs(s, a) = total > 0 ? double(count_sa(s, a)) / double(total) : 1.0 / double(n_actions);
    }
    return StochasticPolicy::from_probs(probs, 1e-6);
}

void OfflineDataset::rebuild_counts() {
    count_sa = ITable2(n_states, n_actions);
    count_sas = ITable3(n_states, n_actions, n_states);
    reward_sum_sa = Table2(n_states, n_actions);
    for (const Tuple& t : transitions) {
        count_sa(t.s, t.a) += 1;
        count_sas(t.s, t.a, t.next) += 1;
        reward_sum_sa(t.s, t.a) += t.r;
    }
}

OfflineDataset collect_dataset(const TabularMdp& mdp, const StochasticPolicy& beta,
                               std::size_t n_transitions, std::uint64_t seed) {
    if (n_transitions == 0)
        throw std::invalid_argument("collect_dataset: need at least one transition");
    OfflineDataset data;
    data.n_states = mdp.n_states;
    data.n_actions = mdp.n_actions;
    data.seed = seed;
    data.count_sa = ITable2(mdp.n_states, mdp.n_actions);
    data.count_sas = ITable3(mdp.n_states, mdp.n_actions, mdp.n_states);
    data.reward_sum_sa = Table2(mdp.n_states, mdp.n_actions);
    data.transitions.reserve(n_transitions);

    MarginalDist d = discounted_marginal(mdp, beta);
    std::vector<double> state_w = d.state_marginal();

    Rng rng = Rng(seed).derive("collect");
    for (std::size_t i = 0; i < n_transitions; ++i) {
        std::size_t s = rng.sample_discrete(state_w);
        std::size_t a = rng.sample_discrete(
            std::span<const double>(beta.probs.v.data() + s * mdp.n_actions, mdp.n_actions));
        std::size_t s2 = rng.sample_discrete(
            std::span<const double>(mdp.transition.row(s, a), mdp.n_states));
        double r = mdp.reward(s, a);
        data.transitions.push_back({std::uint32_t(s), std::uint32_t(a), r, std::uint32_t(s2)});
        data.count_sa(s, a) += 1;
        data.count_sas(s, a, s2) += 1;
        data.reward_sum_sa(s, a) += r;
    }
    return data;
}

EmpiricalMdp induce_empirical(const OfflineDataset& data, double gamma) {
    if (data.size() == 0)
        throw std::invalid_argument("induce_empirical: dataset is empty");
    const std::size_t S = data.n_states, A = data.n_actions;
    EmpiricalMdp emp;
    emp.mdp.n_states = S;
    emp.mdp.n_actions = A;
    emp.mdp.gamma = gamma;
    emp.mdp.transition = Table3(S, A, S);
    emp.mdp.reward = Table2(S, A);
    emp.mdp.init_dist = data.state_marginal();
    emp.support.assign(S * A, 0);
    emp.effective_count = Table2(S, A);
    emp.data_marginal = data.marginal();

    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t a = 0; a < A; ++a) {
            std::int64_t c = data.count_sa(s, a);
            if (c > 0) {
                emp.support[s * A + a] = 1;
                emp.effective_count(s, a) = double(c);
                for (std::size_t s2 = 0; s2 < S; ++s2)
                    emp.mdp.transition(s, a, s2) = double(data.count_sas(s, a, s2)) / double(c);
                emp.mdp.reward(s, a) = data.reward_sum_sa(s, a) / double(c);
            } else {
                emp.effective_count(s, a) = 0.5;
                for (std::size_t s2 = 0; s2 < S; ++s2)
                    emp.mdp.transition(s, a, s2) = 1.0 / double(S);
                emp.mdp.reward(s, a) = 0.0;
            }
        }
    return emp;
}

void save_dataset(const OfflineDataset& data, std::ostream& os) {
    os << data.task_id << " " << data.n_states << " " << data.n_actions << " "
       << to_string(data.quality) << " " << data.seed << "\n";
    for (const auto& t : data.transitions)
        os << t.s << " " << t.a << " " << format_g17(t.r) << " " << t.next << "\n";
}

OfflineDataset load_dataset(std::istream& is) {
    OfflineDataset data;
    std::string quality;
    if (!(is >> data.task_id >> data.n_states >> data.n_actions >> quality >> data.seed))
        throw std::runtime_error("bad dataset header");
    data.quality = quality_from_string(quality);
    OfflineDataset::Tuple t;
    while (is >> t.s >> t.a >> t.r >> t.next) {
        if (t.s >= data.n_states || t.a >= data.n_actions || t.next >= data.n_states)
            throw std::runtime_error("dataset tuple out of range");
        data.transitions.push_back(t);
    }
    if (data.transitions.empty())
        throw std::runtime_error("dataset has no transitions");
    data.rebuild_counts();
    return data;
}

void save_dataset(const OfflineDataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open for writing: " + path);
    save_dataset(data, os);
}

OfflineDataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open for reading: " + path);
    return load_dataset(is);
}

} // namespace merpo
