#pragma once

#include <iosfwd>
#include <string>

#include "merpo/mdp.hpp"

namespace merpo {

/// Formats a double with 17 significant digits (round-trips exactly).
std::string format_g17(double x);

void save_mdp(const TabularMdp& mdp, std::ostream& os);
void save_mdp(const TabularMdp& mdp, const std::string& path);
TabularMdp load_mdp(std::istream& is);
TabularMdp load_mdp(const std::string& path);

void save_policy(const StochasticPolicy& p, std::ostream& os);
void save_policy(const StochasticPolicy& p, const std::string& path);
StochasticPolicy load_policy(std::istream& is);
StochasticPolicy load_policy(const std::string& path);

void save_qtable(const QTable& q, std::ostream& os);
void save_qtable(const QTable& q, const std::string& path);
QTable load_qtable(std::istream& is);
QTable load_qtable(const std::string& path);

} // namespace merpo
