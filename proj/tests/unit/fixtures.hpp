#pragma once
// Small hand-checkable markets shared by the unit tests.
#include <vector>

#include "habitopt/market.hpp"
#include "habitopt/preferences.hpp"
#include "habitopt/scenario.hpp"
#include "habitopt/tree.hpp"

namespace fixtures {

using namespace habitopt;

inline EventTree deterministic(int T) { return EventTree::uniform(std::vector<int>(static_cast<std::size_t>(T), 1)); }

inline AdaptedProcess process(const EventTree& tree, const std::vector<std::vector<double>>& values) {
    std::vector<RandomVariable> rv;
    for (std::size_t k = 0; k < values.size(); ++k) rv.emplace_back(tree, static_cast<int>(k), values[k]);
    return AdaptedProcess(std::move(rv));
}

// T = 1, one node with the given child probabilities; each asset costs 1 and pays payoffs[i][child].
inline MarketModel one_step(const std::vector<double>& probs, const std::vector<std::vector<double>>& payoffs,
                            double rate = 0.0) {
    MarketData d;
    d.tree = EventTree::from_conditional({{probs}});
    d.assets = static_cast<int>(payoffs.size());
    const auto n = probs.size();
    for (const auto& pay : payoffs) {
        d.prices.push_back(process(d.tree, {{1.0}, std::vector<double>(n, 0.0)}));
        d.dividends.push_back(process(d.tree, {{0.0}, pay}));
    }
    d.rates = {RandomVariable::constant(d.tree, 0, rate)};
    return MarketModel::create(std::move(d));
}

// Two-period binary tree with a single risky asset of multiplicative growth (u, d) per step.
inline MarketModel binomial(double u, double d, double p = 0.5, double rate = 0.0) {
    MarketData m;
    m.tree = EventTree::from_conditional({{{p, 1 - p}}, {{p, 1 - p}, {p, 1 - p}}});
    m.assets = 1;
    m.prices.push_back(process(m.tree, {{1.0}, {u, d}, {0, 0, 0, 0}}));
    m.dividends.push_back(process(m.tree, {{0.0}, {0.0, 0.0}, {u * u, u * d, d * u, d * d}}));
    m.rates = {RandomVariable::constant(m.tree, 0, rate), RandomVariable::constant(m.tree, 1, rate)};
    return MarketModel::create(std::move(m));
}

inline Scenario scenario(std::uint64_t seed, MarketFamily family, UtilityKind utility, double beta,
                         std::vector<int> branching = {2, 2}, double gamma = 2.0, bool exogenous = false) {
    ScenarioSeed s;
    s.seed = seed;
    s.market = family;
    s.utility = utility;
    s.habit = beta;
    s.gamma = gamma;
    s.branching = std::move(branching);
    s.exogenous_habit = exogenous;
    return generate(s);
}

}  // namespace fixtures
