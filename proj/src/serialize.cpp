#include "merpo/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace merpo {

std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

void write_table2(std::ostream& os, const Table2& t) {
    for (std::size_t i = 0; i < t.rows; ++i) {
        for (std::size_t j = 0; j < t.cols; ++j)
            os << (j ? " " : "") << format_g17(t(i, j));
        os << "\n";
    }
}

void write_table3(std::ostream& os, const Table3& t) {
    for (std::size_t i = 0; i < t.d0; ++i)
        for (std::size_t j = 0; j < t.d1; ++j) {
            for (std::size_t k = 0; k < t.d2; ++k)
                os << (k ? " " : "") << format_g17(t(i, j, k));
            os << "\n";
        }
}

void read_values(std::istream& is, std::vector<double>& out, std::size_t n,
                 const std::string& what) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!(is >> out[i]))
            throw std::runtime_error("parse error in " + what);
}

void expect_keyword(std::istream& is, const std::string& kw) {
    std::string tok;
    if (!(is >> tok) || tok != kw)
        throw std::runtime_error("expected keyword '" + kw + "', got '" + tok + "'");
}

template <typename Fn> void save_to_file(const std::string& path, Fn fn) {
    std::ofstream os(path);
    if (!os)
        throw std::runtime_error("cannot open for writing: " + path);
    fn(os);
}

template <typename T, typename Fn> T load_from_file(const std::string& path, Fn fn) {
    std::ifstream is(path);
    if (!is)
        throw std::runtime_error("cannot open for reading: " + path);
    return fn(is);
}

} // namespace

void save_mdp(const TabularMdp& mdp, std::ostream& os) {
    os << "merpo-mdp 1\n" << mdp.n_states << " " << mdp.n_actions << "\n";
    os << "gamma " << format_g17(mdp.gamma) << "\n";
    os << "init_dist\n";
    for (std::size_t s = 0; s < mdp.n_states; ++s)
        os << (s ? " " : "") << format_g17(mdp.init_dist[s]);
    os << "\ntransition\n";
    write_table3(os, mdp.transition);
    os << "reward\n";
    write_table2(os, mdp.reward);
}

TabularMdp load_mdp(std::istream& is) {
    expect_keyword(is, "merpo-mdp");
    expect_keyword(is, "1");
    TabularMdp mdp;
    if (!(is >> mdp.n_states >> mdp.n_actions))
        throw std::runtime_error("bad mdp shape header");
    expect_keyword(is, "gamma");
    if (!(is >> mdp.gamma))
        throw std::runtime_error("bad gamma");
    expect_keyword(is, "init_dist");
    read_values(is, mdp.init_dist, mdp.n_states, "init_dist");
    expect_keyword(is, "transition");
    mdp.transition = Table3(mdp.n_states, mdp.n_actions, mdp.n_states);
    read_values(is, mdp.transition.v, mdp.transition.size(), "transition");
    expect_keyword(is, "reward");
    mdp.reward = Table2(mdp.n_states, mdp.n_actions);
    read_values(is, mdp.reward.v, mdp.reward.size(), "reward");
    return mdp;
}

void save_policy(const StochasticPolicy& p, std::ostream& os) {
    os << "merpo-policy 1\n" << p.n_states() << " " << p.n_actions() << "\n";
    os << "logits\n";
    write_table2(os, p.logits);
}

StochasticPolicy load_policy(std::istream& is) {
    expect_keyword(is, "merpo-policy");
    expect_keyword(is, "1");
    std::size_t s, a;
    if (!(is >> s >> a))
        throw std::runtime_error("bad policy shape header");
    expect_keyword(is, "logits");
    Table2 logits(s, a);
    read_values(is, logits.v, logits.size(), "logits");
    return StochasticPolicy(std::move(logits));
}

void save_qtable(const QTable& q, std::ostream& os) {
    os << "merpo-q 1\n" << q.values.rows << " " << q.values.cols << "\n";
    os << "values\n";
    write_table2(os, q.values);
}

QTable load_qtable(std::istream& is) {
    expect_keyword(is, "merpo-q");
    expect_keyword(is, "1");
    std::size_t s, a;
    if (!(is >> s >> a))
        throw std::runtime_error("bad q shape header");
    expect_keyword(is, "values");
    QTable q(s, a);
    read_values(is, q.values.v, q.values.size(), "q values");
    return q;
}

void save_mdp(const TabularMdp& mdp, const std::string& path) {
    save_to_file(path, [&](std::ostream& os) { save_mdp(mdp, os); });
}
TabularMdp load_mdp(const std::string& path) {
    return load_from_file<TabularMdp>(path, [](std::istream& is) { return load_mdp(is); });
}
void save_policy(const StochasticPolicy& p, const std::string& path) {
    save_to_file(path, [&](std::ostream& os) { save_policy(p, os); });
}
StochasticPolicy load_policy(const std::string& path) {
    return load_from_file<StochasticPolicy>(path,
                                            [](std::istream& is) { return load_policy(is); });
}
void save_qtable(const QTable& q, const std::string& path) {
    save_to_file(path, [&](std::ostream& os) { save_qtable(q, os); });
}
QTable load_qtable(const std::string& path) {
    return load_from_file<QTable>(path, [](std::istream& is) { return load_qtable(is); });
}

} // namespace merpo
