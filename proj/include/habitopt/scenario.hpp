#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "habitopt/market.hpp"
#include "habitopt/preferences.hpp"

namespace habitopt {

enum class MarketFamily { Complete, Bond, TypeC, Idiosyncratic, General };
std::string to_string(MarketFamily f);
MarketFamily parse_market_family(const std::string& name);

struct ScenarioSeed {
    std::uint64_t seed = 1;
    std::vector<int> branching{2, 2};   ///< children per node at each level (idiosyncratic uses 4)
    MarketFamily market = MarketFamily::Complete;
    UtilityKind utility = UtilityKind::Power;
    double gamma = 2.0;
    double habit = 0.0;                  ///< one-lag beta
    double rho = 0.0;
    bool exogenous_habit = false;        ///< draw a nonzero h
    bool endowment_after_start = true;   ///< false: eps_k = 0 for k >= 1
    bool stochastic_rates = false;       ///< only honored by the general family
};

struct Scenario {
    ScenarioSeed seed;
    MarketModel model;
    HabitPreferences prefs;
    AdaptedProcess eps;
    int attempts = 0;
};

/// Deterministic in the seed. Rejection-samples until the market is arbitrage free, has a
/// non-vanishing aggregate SPD, classifies as requested and admits an interior consumption plan.
/// Throws GenerationExhausted after 1000 rejections.
Scenario generate(const ScenarioSeed& seed);

}  // namespace habitopt
